#include "esg/http_client.hpp"

#include "esg/error.hpp"

#include <httplib.h>

#include <thread>

namespace esg {

HttpEndpoint HttpEndpoint::parse(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorKind::InvalidArgument, "endpoint URL needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string post_json(const HttpEndpoint& endpoint, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      const HttpRetryPolicy& policy)
{
    httplib::Client client(endpoint.base);
    client.set_connection_timeout(policy.timeout);
    client.set_read_timeout(policy.timeout);
    client.set_write_timeout(policy.timeout);

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);

    std::string last_error;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        auto res = client.Post(endpoint.path, hdrs, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) return res->body;

        bool retryable = true;
        if (!res) {
            last_error = "connection error: " + httplib::to_string(res.error());
        } else {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300);
            retryable = res->status >= 500 || res->status == 429;
        }
        if (!retryable) throw TransportError(endpoint.base + endpoint.path + " " + last_error, attempt);
        if (attempt < policy.max_attempts) std::this_thread::sleep_for(policy.backoff * attempt);
    }
    throw TransportError(endpoint.base + endpoint.path + " " + last_error + " (after " +
                             std::to_string(policy.max_attempts) + " attempts)",
                         policy.max_attempts);
}

}  // namespace esg
