#include "esg/inference.hpp"

#include "esg/error.hpp"
#include "esg/text.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace esg {

using nlohmann::json;

void OracleBackend::set(const std::string& chunk_id, const std::string& activity_id, int label)
{
    labels_[{chunk_id, activity_id}] = label;
}

Completion OracleBackend::complete(const InferenceCall& call)
{
    auto it = labels_.find({call.tag("chunk_id"), call.tag("activity_id")});
    return {it != labels_.end() && it->second == 1 ? "1" : "0", std::nullopt};
}

OracleBackend OracleBackend::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open oracle labels " + path);
    OracleBackend backend;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto r = json::parse(line);
            backend.set(r.at("chunk_id").get<std::string>(), r.at("activity_id").get<std::string>(),
                        r.at("label").get<int>());
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return backend;
}

RemoteChatBackend::RemoteChatBackend(std::string endpoint_url, std::string model, std::string api_key,
                                     double default_temperature, HttpRetryPolicy retry)
    : endpoint_(HttpEndpoint::parse(endpoint_url)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      default_temperature_(default_temperature),
      retry_(retry)
{
}

RemoteChatBackend RemoteChatBackend::from_env()
{
    auto get = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v ? v : "";
    };
    auto url = get("INFER_ENDPOINT");
    auto model = get("INFER_MODEL");
    if (url.empty() || model.empty())
        throw Error(ErrorKind::InvalidArgument, "INFER_ENDPOINT and INFER_MODEL must be set for the remote backend");
    return RemoteChatBackend(url, model, get("INFER_API_KEY"));
}

Completion RemoteChatBackend::complete(const InferenceCall& call)
{
    json messages = json::array();
    for (const auto& m : call.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json req{{"model", model_},
             {"messages", std::move(messages)},
             {"temperature", call.temperature.value_or(default_temperature_)}};

    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty()) {
        headers.emplace_back("Authorization", "Bearer " + api_key_);
        headers.emplace_back("api-key", api_key_);
    }
    auto body = post_json(endpoint_, req.dump(), headers, retry_);

    try {
        auto res = json::parse(body);
        Completion out;
        if (res.contains("choices")) {
            out.text = res.at("choices").at(0).at("message").at("content").get<std::string>();
        } else {
            out.text = res.at("text").get<std::string>();
        }
        if (res.contains("probability") && !res.at("probability").is_null())
            out.probability = res.at("probability").get<double>();
        return out;
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed completion response: ") + e.what(), 1);
    }
}

}  // namespace esg
