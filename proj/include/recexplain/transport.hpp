#pragma once

#include <chrono>
#include <functional>
#include <thread>
#include <string>

#include <nlohmann/json.hpp>

#include "recexplain/error.hpp"

namespace recexplain {

// Bounded retries with exponential backoff, applied to retryable
// TransportErrors only.
struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

// Runs `fn`, retrying retryable TransportErrors per `policy`. The error that
// finally escapes carries the number of attempts made.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn,
                const std::function<void(std::chrono::milliseconds)>& sleep = {}) -> decltype(fn()) {
    auto delay = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= policy.max_attempts) {
                throw TransportError(e.what(), e.retryable(), attempt, e.status());
            }
        }
        if (sleep) sleep(delay);
        else std::this_thread::sleep_for(delay);
        delay = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier));
    }
}

struct HttpEndpoint {
    std::string url;  // scheme://host[:port]/path
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
};

// POSTs `body` as JSON and returns the parsed JSON response. Connection
// failures, timeouts, 408/429 and 5xx raise retryable TransportErrors; other
// non-2xx statuses and unparseable bodies raise non-retryable ones.
nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body);

}  // namespace recexplain
