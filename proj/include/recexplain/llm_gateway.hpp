#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recexplain/transport.hpp"

namespace recexplain {

inline constexpr const char* kDefaultLlmModel = "Falcon-40b";
inline constexpr int kExplanationMaxTokens = 256;
inline constexpr int kAspectMaxTokens = 128;

struct GenerationParams {
    double temperature = 0.7;
    double top_p = 0.6;
    int max_tokens = kExplanationMaxTokens;
    std::vector<std::string> stop_sequences;
    std::optional<std::int64_t> seed;

    // Throws Error{contract} when any field is out of range.
    void validate() const;

    bool operator==(const GenerationParams&) const = default;
};

nlohmann::ordered_json to_json(const GenerationParams& params);
GenerationParams params_from_json(const nlohmann::json& j);

struct CompletionRequest {
    std::string model_id;
    std::string prompt;
    GenerationParams params;
};

struct CompletionRecord {
    std::string prompt;
    GenerationParams params;
    std::string output;  // verbatim backend text
    std::string model_id;
    std::chrono::microseconds latency{0};
    std::string timestamp;  // ISO-8601 UTC
};

nlohmann::ordered_json to_json(const CompletionRecord& record);

// Text-generation backend. Implementations must be safe to call concurrently.
class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

enum class MatchKind { contains, prefix, equals, regex, sha256 };

struct ScriptRule {
    MatchKind kind = MatchKind::contains;
    std::string pattern;
    std::string response;
    std::vector<std::string> also_contains;  // extra substrings the prompt must hold
};

// Deterministic provider for offline runs: the first rule whose matcher
// accepts the prompt supplies the response. Unmatched prompts raise
// Error{no_script} quoting the prompt's first 80 characters.
class ScriptedProvider final : public LlmProvider {
public:
    explicit ScriptedProvider(std::vector<ScriptRule> rules);

    std::string complete(const CompletionRequest& request) override;

    std::size_t calls() const { return calls_.load(); }

private:
    struct CompiledRule {
        ScriptRule rule;
        std::optional<std::regex> re;
    };
    std::vector<CompiledRule> rules_;
    std::atomic<std::size_t> calls_{0};
};

std::shared_ptr<ScriptedProvider> make_scripted_provider(std::vector<ScriptRule> script);

// Script file: JSON list of {"match": "contains|prefix|equals|regex|sha256",
// "pattern": ..., "response": ..., "also_contains": [...] (optional)}.
std::vector<ScriptRule> load_script(const std::filesystem::path& path);
std::vector<ScriptRule> script_from_json(const nlohmann::json& j);

// Wire contract: POST {"model_id","prompt","temperature","top_p","max_tokens","stop"}
// -> {"text"}.
class HttpLlmProvider final : public LlmProvider {
public:
    explicit HttpLlmProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    std::string complete(const CompletionRequest& request) override;

    static nlohmann::json wire_request(const CompletionRequest& request);

private:
    HttpEndpoint endpoint_;
};

// Append-only JSONL audit of completions; appends are serialized.
class AuditLog {
public:
    explicit AuditLog(std::optional<std::filesystem::path> path = std::nullopt) : path_(std::move(path)) {}

    void append(const CompletionRecord& record);
    std::size_t count() const;
    std::vector<CompletionRecord> records() const;

private:
    std::optional<std::filesystem::path> path_;
    mutable std::mutex mutex_;
    std::vector<CompletionRecord> records_;
};

struct GatewayOptions {
    std::string model_id = kDefaultLlmModel;
    RetryPolicy retry;
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleeping the thread
};

// The single route from the pipeline to a text-generation backend.
class Gateway {
public:
    Gateway(std::shared_ptr<LlmProvider> provider, std::shared_ptr<AuditLog> audit = nullptr,
            GatewayOptions options = {});

    // Validates params before touching the backend, retries transport-class
    // failures, and audits the record before returning it.
    CompletionRecord complete(const std::string& prompt, const GenerationParams& params);

    const std::string& model_id() const { return options_.model_id; }
    const AuditLog& audit() const { return *audit_; }
    std::size_t calls() const { return calls_.load(); }

private:
    std::shared_ptr<LlmProvider> provider_;
    std::shared_ptr<AuditLog> audit_;
    GatewayOptions options_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace recexplain
