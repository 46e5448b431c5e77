#include "recexplain/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"

namespace recexplain {

namespace {

struct Field {
    std::string name;
    bool secret = false;
    std::function<void(AppConfig&, const std::string&)> set;
    std::function<nlohmann::ordered_json(const AppConfig&)> get;
};

double parse_double(const std::string& text) {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
}

long long parse_integer(const std::string& text) {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
}

Field text_field(std::string name, std::string AppConfig::*member, bool secret = false) {
    return {std::move(name), secret, [member](AppConfig& c, const std::string& v) { c.*member = v; },
            [member](const AppConfig& c) { return nlohmann::ordered_json(c.*member); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        text_field("llm_backend", &AppConfig::llm_backend),
        text_field("llm_endpoint", &AppConfig::llm_endpoint),
        text_field("llm_script", &AppConfig::llm_script),
        text_field("model_id", &AppConfig::model_id),
        text_field("embedding_backend", &AppConfig::embedding_backend),
        text_field("embedding_endpoint", &AppConfig::embedding_endpoint),
        text_field("embedding_model", &AppConfig::embedding_model),
        text_field("api_key", &AppConfig::api_key, true),
        {"temperature", false, [](AppConfig& c, const std::string& v) { c.temperature = parse_double(v); },
         [](const AppConfig& c) { return nlohmann::ordered_json(c.temperature); }},
        {"top_p", false, [](AppConfig& c, const std::string& v) { c.top_p = parse_double(v); },
         [](const AppConfig& c) { return nlohmann::ordered_json(c.top_p); }},
        {"k", false,
         [](AppConfig& c, const std::string& v) {
             const auto k = parse_integer(v);
             if (k < 0) throw std::invalid_argument(v);
             c.k = static_cast<std::size_t>(k);
         },
         [](const AppConfig& c) { return nlohmann::ordered_json(c.k); }},
        text_field("template_version", &AppConfig::template_version),
        text_field("templates_dir", &AppConfig::templates_dir),
        text_field("data_dir", &AppConfig::data_dir),
        text_field("examples_path", &AppConfig::examples_path),
        text_field("listen", &AppConfig::listen),
        {"request_timeout_ms", false,
         [](AppConfig& c, const std::string& v) { c.request_timeout_ms = static_cast<int>(parse_integer(v)); },
         [](const AppConfig& c) { return nlohmann::ordered_json(c.request_timeout_ms); }},
    };
    return table;
}

const Field* find_field(const std::string& name) {
    for (const auto& f : fields()) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

}  // namespace

void AppConfig::validate() const {
    auto fail = [](const std::string& message) { throw Error(ErrorCode::config, message, "config"); };
    if (llm_backend != "http" && llm_backend != "scripted") fail("llm_backend must be 'http' or 'scripted'");
    if (embedding_backend != "http" && embedding_backend != "hashing") {
        fail("embedding_backend must be 'http' or 'hashing'");
    }
    if (trim(model_id).empty()) fail("model_id must be nonempty");
    if (trim(embedding_model).empty()) fail("embedding_model must be nonempty");
    if (!std::isfinite(temperature) || temperature < 0.0) fail("temperature must be a finite value >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) fail("top_p must be in (0, 1]");
    if (k == 0) fail("k must be at least 1");
    if (trim(template_version).empty()) fail("template_version must be nonempty");
    if (trim(data_dir).empty()) fail("data_dir must be nonempty");
    if (request_timeout_ms <= 0) fail("request_timeout_ms must be positive");
    parse_listen(listen);
}

const std::vector<std::string>& config_field_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& f : fields()) out.push_back(f.name);
        return out;
    }();
    return names;
}

nlohmann::ordered_json to_json(const AppConfig& config, bool redact) {
    nlohmann::ordered_json j;
    for (const auto& f : fields()) {
        auto value = f.get(config);
        if (redact && f.secret && !value.get<std::string>().empty()) value = "***";
        j[f.name] = std::move(value);
    }
    return j;
}

void apply_overrides(AppConfig& config, const std::map<std::string, std::string>& values, const std::string& source) {
    for (const auto& [name, value] : values) {
        const Field* field = find_field(name);
        if (!field) throw Error(ErrorCode::config, source + ": unknown setting '" + name + "'", "config");
        try {
            field->set(config, value);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::config, source + ": invalid value '" + value + "' for " + name, "config");
        }
    }
}

void apply_json(AppConfig& config, const nlohmann::json& j, const std::string& source) {
    if (!j.is_object()) throw Error(ErrorCode::config, source + ": expected a JSON object", "config");
    std::map<std::string, std::string> values;
    for (const auto& [key, value] : j.items()) {
        if (value.is_string()) values[key] = value.get<std::string>();
        else if (value.is_number() || value.is_boolean()) values[key] = value.dump();
        else throw Error(ErrorCode::config, source + ": setting '" + key + "' must be a scalar", "config");
    }
    apply_overrides(config, values, source);
}

std::map<std::string, std::string> config_from_environment() {
    std::map<std::string, std::string> values;
    for (const auto& name : config_field_names()) {
        std::string var = "RECEXPLAIN_";
        for (char c : name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const char* v = std::getenv(var.c_str())) values[name] = v;
    }
    return values;
}

AppConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::map<std::string, std::string>& environment,
                         const std::map<std::string, std::string>& flags) {
    AppConfig config;
    if (file) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(*file));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::config, file->string() + ": " + e.what(), "config");
        } catch (const Error& e) {
            throw Error(ErrorCode::config, std::string("config file unreadable: ") + e.what(), "config");
        }
        apply_json(config, j, file->string());
    }
    apply_overrides(config, environment, "environment");
    apply_overrides(config, flags, "flags");
    config.validate();
    return config;
}

ListenAddress parse_listen(const std::string& listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos || colon == 0) {
        throw Error(ErrorCode::config, "listen must be host:port, got '" + listen + "'", "config");
    }
    ListenAddress address{listen.substr(0, colon), 0};
    try {
        const auto port = parse_integer(listen.substr(colon + 1));
        if (port < 0 || port > 65535) throw std::out_of_range(listen);
        address.port = static_cast<int>(port);
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::config, "listen port out of range in '" + listen + "'", "config");
    }
    return address;
}

}  // namespace recexplain
