#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "esg/http_client.hpp"

namespace esg {

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct InferenceCall {
    std::vector<ChatMessage> messages;
    // Routing hints for local backends (chunk_id, activity_id, pair_id,
    // variant, attempt). Remote backends ignore them.
    std::map<std::string, std::string> tags;
    std::optional<double> temperature;

    std::string tag(const std::string& key) const
    {
        auto it = tags.find(key);
        return it == tags.end() ? std::string{} : it->second;
    }
};

struct Completion {
    std::string text;
    std::optional<double> probability;  // P(label = 1) when the backend reports it
};

// Anything that answers chat-style calls. Implementations must tolerate
// concurrent calls to complete().
class InferenceBackend {
public:
    virtual ~InferenceBackend() = default;
    virtual std::string id() const = 0;
    // Throws TransportError on delivery failure.
    virtual Completion complete(const InferenceCall& call) = 0;
};

// Answers "1" for planted (chunk_id, activity_id) pairs and "0" otherwise.
class OracleBackend final : public InferenceBackend {
public:
    OracleBackend() = default;
    explicit OracleBackend(std::map<std::pair<std::string, std::string>, int> labels)
        : labels_(std::move(labels)) {}

    void set(const std::string& chunk_id, const std::string& activity_id, int label);
    std::string id() const override { return "oracle"; }
    Completion complete(const InferenceCall& call) override;

    // JSONL of {"chunk_id", "activity_id", "label"}.
    static OracleBackend load(const std::string& path);

private:
    std::map<std::pair<std::string, std::string>, int> labels_;
};

// Wraps a callable; handy for tests and scripted generators.
class FunctionBackend final : public InferenceBackend {
public:
    using Fn = std::function<Completion(const InferenceCall&)>;
    FunctionBackend(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}

    std::string id() const override { return id_; }
    Completion complete(const InferenceCall& call) override { return fn_(call); }

private:
    std::string id_;
    Fn fn_;
};

// Chat-completion over HTTP. Request:
//   {"model": M, "messages": [{"role", "content"}, ..], "temperature": T}
// Response: {"choices": [{"message": {"content": ..}}]} or {"text": ..},
// optionally with a top-level "probability".
class RemoteChatBackend final : public InferenceBackend {
public:
    RemoteChatBackend(std::string endpoint_url, std::string model, std::string api_key,
                      double default_temperature = 0.0, HttpRetryPolicy retry = {});
    // INFER_ENDPOINT, INFER_MODEL, INFER_API_KEY.
    static RemoteChatBackend from_env();

    std::string id() const override { return "remote:" + model_; }
    Completion complete(const InferenceCall& call) override;

private:
    HttpEndpoint endpoint_;
    std::string model_;
    std::string api_key_;
    double default_temperature_;
    HttpRetryPolicy retry_;
};

}  // namespace esg
