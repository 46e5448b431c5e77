#include "recexplain/transport.hpp"

#include <httplib.h>

#include <regex>

namespace recexplain {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, pattern)) {
        throw Error(ErrorCode::config, "malformed endpoint URL '" + url + "'");
    }
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body) {
    auto [origin, path] = split_url(endpoint.url);
    httplib::Client client(origin);
    auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

    auto response = client.Post(path, headers, body.dump(), "application/json");
    if (!response) {
        throw TransportError("request to " + endpoint.url + " failed: " + httplib::to_string(response.error()),
                             true);
    }
    if (response->status < 200 || response->status >= 300) {
        throw TransportError("backend returned HTTP " + std::to_string(response->status) + ": " +
                                 response->body.substr(0, 200),
                             retryable_status(response->status), 1, response->status);
    }
    try {
        return nlohmann::json::parse(response->body);
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("backend response is not JSON: ") + e.what(), false, 1,
                             response->status);
    }
}

}  // namespace recexplain
