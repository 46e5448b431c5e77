#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace recexplain {

// Runtime configuration shared by the CLI and the HTTP service. Field names
// double as config-file keys, CLI flags (--model_id / --model-id) and
// environment variables (RECEXPLAIN_MODEL_ID).
struct AppConfig {
    std::string llm_backend = "http";  // http | scripted
    std::string llm_endpoint;
    std::string llm_script;
    std::string model_id = "Falcon-40b";
    std::string embedding_backend = "http";  // http | hashing
    std::string embedding_endpoint;
    std::string embedding_model = "all-MiniLM-L6-v2";
    std::string api_key;
    double temperature = 0.7;
    double top_p = 0.6;
    std::size_t k = 5;
    std::string template_version = "v1";
    std::string templates_dir;  // empty: built-in templates
    std::string data_dir = "recexplain-data";
    std::string examples_path = "data/fixtures/priming_examples.v1.json";
    std::string listen = "127.0.0.1:8080";
    int request_timeout_ms = 30000;

    // Throws Error{config} naming the first invalid field.
    void validate() const;
};

// Field names in declaration order.
const std::vector<std::string>& config_field_names();

// Secrets are replaced by "***" when `redact` is set and they are nonempty.
nlohmann::ordered_json to_json(const AppConfig& config, bool redact = true);

// Applies string-valued overrides; unknown keys and unparseable values raise
// Error{config} mentioning `source`.
void apply_overrides(AppConfig& config, const std::map<std::string, std::string>& values, const std::string& source);

// Applies a JSON object (config file contents). Values may be strings or
// native JSON scalars.
void apply_json(AppConfig& config, const nlohmann::json& j, const std::string& source);

// RECEXPLAIN_<FIELD> variables present in the environment.
std::map<std::string, std::string> config_from_environment();

// defaults < file < environment < flags.
AppConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::map<std::string, std::string>& environment,
                         const std::map<std::string, std::string>& flags);

struct ListenAddress {
    std::string host;
    int port = 0;
};

// "host:port"; throws Error{config}.
ListenAddress parse_listen(const std::string& listen);

}  // namespace recexplain
