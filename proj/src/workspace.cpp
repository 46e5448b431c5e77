#include "recexplain/workspace.hpp"

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"

namespace recexplain {

namespace {

HttpEndpoint endpoint(const std::string& url, const AppConfig& config, const std::string& field) {
    if (trim(url).empty()) throw Error(ErrorCode::config, field + " is required for the http backend", "config");
    return {url, config.api_key, std::chrono::milliseconds(config.request_timeout_ms)};
}

std::string jsonl(const std::vector<nlohmann::ordered_json>& rows) {
    std::string out;
    for (const auto& row : rows) out += row.dump() + "\n";
    return out;
}

}  // namespace

IngestSummary ingest_workspace(const WorkspacePaths& paths, const IngestOptions& options) {
    auto ingested = ingest_catalog(options.catalog, options.format);
    IngestSummary summary;
    summary.rows_read = ingested.rows_read;
    summary.skipped = std::move(ingested.skipped);
    Catalog catalog = std::move(ingested.catalog);
    if (options.metadata) {
        auto merged = merge_metadata(catalog, load_metadata(*options.metadata));
        catalog = std::move(merged.catalog);
        summary.metadata_ignored = std::move(merged.ignored_ids);
        summary.metadata_rejected = std::move(merged.rejected);
    }
    std::vector<nlohmann::ordered_json> history_rows;
    if (options.history) {
        for (const auto& history : load_history(*options.history)) {
            try {
                check_history(catalog, history);
            } catch (const Error& e) {
                throw Error(e.code(), "user '" + history.user_id + "': " + e.what(), "history");
            }
            history_rows.push_back(to_json(history));
        }
    }
    std::filesystem::create_directories(paths.root);
    write_file_atomic(paths.catalog(), catalog.to_jsonl());
    if (options.history) write_file_atomic(paths.history(), jsonl(history_rows));
    summary.items = catalog.size();
    summary.users = history_rows.size();
    return summary;
}

Catalog load_workspace_catalog(const WorkspacePaths& paths) {
    if (!std::filesystem::exists(paths.catalog())) {
        throw Error(ErrorCode::config, "no catalog at " + paths.catalog().string() + "; run ingest first", "catalog");
    }
    return ingest_catalog(paths.catalog(), CatalogFormat::jsonl).catalog;
}

std::vector<UserHistory> load_workspace_history(const WorkspacePaths& paths) {
    std::vector<UserHistory> out;
    if (!std::filesystem::exists(paths.history())) return out;
    const auto lines = read_lines(paths.history());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            out.push_back(history_from_json(nlohmann::json::parse(lines[i])));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, paths.history().string() + ":" + std::to_string(i + 1) + ": " + e.what(),
                        "history");
        }
    }
    return out;
}

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const AppConfig& config) {
    if (config.embedding_backend == "hashing") return std::make_shared<HashingEmbeddingProvider>();
    return std::make_shared<HttpEmbeddingProvider>(endpoint(config.embedding_endpoint, config, "embedding_endpoint"),
                                                   config.embedding_model);
}

std::shared_ptr<LlmProvider> make_llm_provider(const AppConfig& config) {
    if (config.llm_backend == "scripted") {
        if (trim(config.llm_script).empty()) {
            throw Error(ErrorCode::config, "llm_script is required for the scripted backend", "config");
        }
        return make_scripted_provider(load_script(config.llm_script));
    }
    return std::make_shared<HttpLlmProvider>(endpoint(config.llm_endpoint, config, "llm_endpoint"));
}

PromptTemplates load_templates(const AppConfig& config) {
    if (config.templates_dir.empty()) {
        auto defaults = PromptTemplates::defaults();
        if (config.template_version != defaults.version) {
            throw Error(ErrorCode::config,
                        "template_version '" + config.template_version + "' needs templates_dir to be set", "config");
        }
        return defaults;
    }
    return PromptTemplates::load(config.templates_dir, config.template_version);
}

GenerationParams generation_params(const AppConfig& config) {
    GenerationParams params;
    params.temperature = config.temperature;
    params.top_p = config.top_p;
    return params;
}

EmbedSummary embed_workspace(const WorkspacePaths& paths, EmbeddingProvider& provider, bool force) {
    const Catalog catalog = load_workspace_catalog(paths);
    const auto model_id = provider.model_id();
    const auto fingerprint = index_fingerprint(catalog, model_id);
    if (!force && std::filesystem::exists(paths.index())) {
        try {
            const auto existing = EmbeddingIndex::load(paths.index());
            if (existing.fingerprint() == fingerprint && existing.model_id() == model_id) {
                return {true, existing.size(), model_id, fingerprint};
            }
        } catch (const Error&) {
            // unreadable index: rebuild below
        }
    }
    const auto index = build_index(catalog, provider);
    index.save(paths.index());
    return {false, index.size(), model_id, index.fingerprint()};
}

ExplanationStore::ExplanationStore(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
    if (!path_ || !std::filesystem::exists(*path_)) return;
    const auto lines = read_lines(*path_);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            auto e = explanation_from_json(nlohmann::json::parse(lines[i]));
            if (entries_.count(e.id)) continue;
            order_.push_back(e.id);
            entries_.emplace(e.id, std::move(e));
        } catch (const nlohmann::json::exception& err) {
            throw Error(ErrorCode::parse, path_->string() + ":" + std::to_string(i + 1) + ": " + err.what(),
                        "explanations");
        }
    }
}

bool ExplanationStore::add(const Explanation& explanation) {
    std::lock_guard lock(mutex_);
    if (entries_.count(explanation.id)) return false;
    if (path_) append_line(*path_, to_json(explanation).dump());
    order_.push_back(explanation.id);
    entries_.emplace(explanation.id, explanation);
    return true;
}

std::optional<Explanation> ExplanationStore::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<Explanation> ExplanationStore::all() const {
    std::lock_guard lock(mutex_);
    std::vector<Explanation> out;
    for (const auto& id : order_) out.push_back(entries_.at(id));
    return out;
}

std::size_t ExplanationStore::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

Runtime::Runtime(AppConfig config, std::shared_ptr<LlmProvider> llm)
    : config_(std::move(config)),
      paths_{config_.data_dir},
      catalog_(load_workspace_catalog(paths_)),
      templates_(load_templates(config_)),
      audit_(std::make_shared<AuditLog>(paths_.audit())),
      explanations_(paths_.explanations()),
      ratings_(CriterionSet{}, paths_.ratings()) {
    config_.validate();
    for (auto& history : load_workspace_history(paths_)) histories_.emplace(history.user_id, std::move(history));

    if (!std::filesystem::exists(paths_.index())) {
        throw Error(ErrorCode::config, "no index at " + paths_.index().string() + "; run embed first", "index");
    }
    index_ = EmbeddingIndex::load(paths_.index());
    const auto expected_model = make_embedding_provider(config_)->model_id();
    if (index_.model_id() != expected_model ||
        index_.fingerprint() != index_fingerprint(catalog_, index_.model_id())) {
        throw Error(ErrorCode::config, "index at " + paths_.index().string() + " is stale; run embed again", "index");
    }

    if (!llm) llm = make_llm_provider(config_);
    GatewayOptions options;
    options.model_id = config_.model_id;
    gateway_ = std::make_unique<Gateway>(std::move(llm), audit_, options);
    aspect_cache_ = std::make_unique<AspectCache>(paths_.aspects());
    for (const auto& e : explanations_.all()) ratings_.register_explanation(e.id, e.request.method);
}

const UserHistory& Runtime::history(const std::string& user_id) const {
    auto it = histories_.find(user_id);
    if (it == histories_.end()) throw Error(ErrorCode::lookup, "unknown user '" + user_id + "'", "history");
    return it->second;
}

const std::vector<AspectExample>& Runtime::examples() {
    std::call_once(examples_once_, [this] {
        if (trim(config_.examples_path).empty()) {
            throw Error(ErrorCode::config, "examples_path is required for aspect extraction", "aspects");
        }
        examples_ = load_examples(config_.examples_path);
    });
    return examples_;
}

Explanation Runtime::explain(const std::string& recommended_id, const std::string& user_id, ExplanationMethod method) {
    ExplanationRequest request;
    request.recommended_id = recommended_id;
    request.user_history = history(user_id);
    request.method = method;
    request.params = generation_params(config_);
    request.k = config_.k;
    static const std::vector<AspectExample> kNoExamples;
    const auto& priming = method == ExplanationMethod::logic_scaffolding ? examples() : kNoExamples;
    ExplanationContext context{catalog_, index_, *gateway_, *aspect_cache_, priming, templates_, {}};
    auto explanation = generate_explanation(request, context);
    explanations_.add(explanation);
    ratings_.register_explanation(explanation.id, method);
    return explanation;
}

AspectsSummary Runtime::extract_all(const std::vector<std::string>& item_ids) {
    std::vector<std::string> ids = item_ids;
    if (ids.empty()) {
        for (const auto& [id, item] : catalog_.items()) ids.push_back(id);
    }
    AspectsSummary summary;
    const auto params = aspect_params(generation_params(config_));
    for (const auto& id : ids) {
        ++summary.items;
        try {
            const auto set = extract_aspects(catalog_.at(id), *gateway_, examples(), *aspect_cache_, templates_, params);
            ++(set.source == AspectSource::cache ? summary.cached : summary.extracted);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::config) throw;
            summary.failed.push_back({id, std::string(to_string(e.code())), e.what()});
        }
    }
    return summary;
}

}  // namespace recexplain
