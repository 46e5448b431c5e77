#include "recexplain/llm_gateway.hpp"

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"

#include <cmath>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace recexplain {

namespace {

std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
    const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(tp);
    const auto millis = std::chrono::duration_cast<std::chrono::milliseconds>(tp - secs).count();
    const std::time_t t = std::chrono::system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << millis << 'Z';
    return out.str();
}

MatchKind parse_match_kind(const std::string& s) {
    if (s == "contains") return MatchKind::contains;
    if (s == "prefix") return MatchKind::prefix;
    if (s == "equals") return MatchKind::equals;
    if (s == "regex") return MatchKind::regex;
    if (s == "sha256") return MatchKind::sha256;
    throw Error(ErrorCode::config, "unknown script matcher '" + s + "'");
}

}  // namespace

void GenerationParams::validate() const {
    if (!std::isfinite(temperature) || temperature < 0.0) {
        throw Error(ErrorCode::contract, "temperature must be >= 0, got " + std::to_string(temperature));
    }
    if (!std::isfinite(top_p) || top_p <= 0.0 || top_p > 1.0) {
        throw Error(ErrorCode::contract, "top_p must be in (0, 1], got " + std::to_string(top_p));
    }
    if (max_tokens <= 0) throw Error(ErrorCode::contract, "max_tokens must be positive");
}

nlohmann::ordered_json to_json(const GenerationParams& params) {
    nlohmann::ordered_json j;
    j["temperature"] = params.temperature;
    j["top_p"] = params.top_p;
    j["max_tokens"] = params.max_tokens;
    j["stop_sequences"] = params.stop_sequences;
    j["seed"] = params.seed ? nlohmann::ordered_json(*params.seed) : nlohmann::ordered_json(nullptr);
    return j;
}

GenerationParams params_from_json(const nlohmann::json& j) {
    GenerationParams p;
    if (j.contains("temperature")) p.temperature = j.at("temperature").get<double>();
    if (j.contains("top_p")) p.top_p = j.at("top_p").get<double>();
    if (j.contains("max_tokens")) p.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("stop_sequences")) p.stop_sequences = j.at("stop_sequences").get<std::vector<std::string>>();
    if (j.contains("seed") && !j.at("seed").is_null()) p.seed = j.at("seed").get<std::int64_t>();
    return p;
}

nlohmann::ordered_json to_json(const CompletionRecord& record) {
    nlohmann::ordered_json j;
    j["prompt"] = record.prompt;
    j["params"] = to_json(record.params);
    j["output"] = record.output;
    j["model_id"] = record.model_id;
    j["latency_ms"] = static_cast<double>(record.latency.count()) / 1000.0;
    j["timestamp"] = record.timestamp;
    return j;
}

ScriptedProvider::ScriptedProvider(std::vector<ScriptRule> rules) {
    for (auto& rule : rules) {
        CompiledRule compiled{std::move(rule), std::nullopt};
        if (compiled.rule.kind == MatchKind::regex) {
            try {
                compiled.re.emplace(compiled.rule.pattern);
            } catch (const std::regex_error& e) {
                throw Error(ErrorCode::config, "invalid script regex '" + compiled.rule.pattern + "': " + e.what());
            }
        }
        rules_.push_back(std::move(compiled));
    }
}

std::string ScriptedProvider::complete(const CompletionRequest& request) {
    ++calls_;
    const auto& prompt = request.prompt;
    std::string digest;
    for (const auto& [rule, re] : rules_) {
        bool hit = false;
        switch (rule.kind) {
            case MatchKind::contains: hit = prompt.find(rule.pattern) != std::string::npos; break;
            case MatchKind::prefix: hit = prompt.starts_with(rule.pattern); break;
            case MatchKind::equals: hit = prompt == rule.pattern; break;
            case MatchKind::regex: hit = std::regex_search(prompt, *re); break;
            case MatchKind::sha256:
                if (digest.empty()) digest = sha256_hex(prompt);
                hit = digest == to_lower(rule.pattern);
                break;
        }
        for (std::size_t i = 0; hit && i < rule.also_contains.size(); ++i) {
            hit = prompt.find(rule.also_contains[i]) != std::string::npos;
        }
        if (hit) return rule.response;
    }
    throw Error(ErrorCode::no_script, "no script entry matches prompt: \"" + prompt.substr(0, 80) + "\"");
}

std::shared_ptr<ScriptedProvider> make_scripted_provider(std::vector<ScriptRule> script) {
    return std::make_shared<ScriptedProvider>(std::move(script));
}

std::vector<ScriptRule> script_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::config, "script must be a JSON list");
    std::vector<ScriptRule> rules;
    for (const auto& entry : j) {
        try {
            rules.push_back({parse_match_kind(entry.value("match", std::string("contains"))),
                             entry.at("pattern").get<std::string>(), entry.at("response").get<std::string>(),
                             entry.value("also_contains", std::vector<std::string>{})});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::config, std::string("malformed script entry: ") + e.what());
        }
    }
    return rules;
}

std::vector<ScriptRule> load_script(const std::filesystem::path& path) {
    try {
        return script_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, path.string() + ": " + e.what());
    }
}

nlohmann::json HttpLlmProvider::wire_request(const CompletionRequest& request) {
    return {{"model_id", request.model_id},
            {"prompt", request.prompt},
            {"temperature", request.params.temperature},
            {"top_p", request.params.top_p},
            {"max_tokens", request.params.max_tokens},
            {"stop", request.params.stop_sequences}};
}

std::string HttpLlmProvider::complete(const CompletionRequest& request) {
    auto response = post_json(endpoint_, wire_request(request));
    if (!response.is_object() || !response.contains("text") || !response.at("text").is_string()) {
        throw TransportError("completion response lacks a \"text\" string", false);
    }
    return response.at("text").get<std::string>();
}

void AuditLog::append(const CompletionRecord& record) {
    std::lock_guard lock(mutex_);
    if (path_) append_line(*path_, to_json(record).dump());
    records_.push_back(record);
}

std::size_t AuditLog::count() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::vector<CompletionRecord> AuditLog::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

Gateway::Gateway(std::shared_ptr<LlmProvider> provider, std::shared_ptr<AuditLog> audit, GatewayOptions options)
    : provider_(std::move(provider)),
      audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()),
      options_(std::move(options)) {
    if (!provider_) throw Error(ErrorCode::contract, "gateway needs a provider");
}

CompletionRecord Gateway::complete(const std::string& prompt, const GenerationParams& params) {
    if (trim(prompt).empty()) throw Error(ErrorCode::contract, "prompt must be nonempty");
    params.validate();

    CompletionRequest request{options_.model_id, prompt, params};
    const auto started = std::chrono::steady_clock::now();
    const auto wall = std::chrono::system_clock::now();
    ++calls_;
    std::string output = with_retry(options_.retry, [&] { return provider_->complete(request); }, options_.sleep);

    CompletionRecord record{prompt,
                            params,
                            std::move(output),
                            options_.model_id,
                            std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started),
                            utc_timestamp(wall)};
    audit_->append(record);
    return record;
}

}  // namespace recexplain
