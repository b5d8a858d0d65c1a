#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace esg {

struct HttpEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;  // "/v1/chat/completions"

    // Splits "http://host:8080/v1/x" into base and path.
    static HttpEndpoint parse(const std::string& url);
};

struct HttpRetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds backoff{200};
    std::chrono::seconds timeout{60};
};

// POSTs a JSON body and returns the response body on a 2xx status. Connection
// failures and 5xx/429 responses are retried; anything else fails at once.
// Throws TransportError carrying the number of attempts made.
std::string post_json(const HttpEndpoint& endpoint, const std::string& body,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      const HttpRetryPolicy& policy = {});

}  // namespace esg
