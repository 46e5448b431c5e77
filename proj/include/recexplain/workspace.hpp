#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "recexplain/aspects.hpp"
#include "recexplain/catalog.hpp"
#include "recexplain/config.hpp"
#include "recexplain/embedding.hpp"
#include "recexplain/evaluation.hpp"
#include "recexplain/explanation.hpp"
#include "recexplain/llm_gateway.hpp"

namespace recexplain {

// Artifact layout of a data directory.
struct WorkspacePaths {
    std::filesystem::path root;

    std::filesystem::path catalog() const { return root / "catalog.jsonl"; }
    std::filesystem::path history() const { return root / "history.jsonl"; }
    std::filesystem::path index() const { return root / "index.bin"; }
    std::filesystem::path aspects() const { return root / "aspects.jsonl"; }
    std::filesystem::path explanations() const { return root / "explanations.jsonl"; }
    std::filesystem::path audit() const { return root / "audit.jsonl"; }
    std::filesystem::path ratings() const { return root / "ratings.jsonl"; }
};

struct IngestOptions {
    std::filesystem::path catalog;
    CatalogFormat format = CatalogFormat::jsonl;
    std::optional<std::filesystem::path> metadata;
    std::optional<std::filesystem::path> history;
};

struct IngestSummary {
    std::size_t items = 0;
    std::size_t rows_read = 0;
    std::vector<RowReport> skipped;
    std::vector<std::string> metadata_ignored;
    std::vector<RowReport> metadata_rejected;
    std::size_t users = 0;
};

// Writes catalog.jsonl (and history.jsonl when a history file is given).
// Histories naming unknown items fail with Error{lookup}.
IngestSummary ingest_workspace(const WorkspacePaths& paths, const IngestOptions& options);

Catalog load_workspace_catalog(const WorkspacePaths& paths);
std::vector<UserHistory> load_workspace_history(const WorkspacePaths& paths);

std::shared_ptr<EmbeddingProvider> make_embedding_provider(const AppConfig& config);
std::shared_ptr<LlmProvider> make_llm_provider(const AppConfig& config);
PromptTemplates load_templates(const AppConfig& config);
GenerationParams generation_params(const AppConfig& config);

struct EmbedSummary {
    bool up_to_date = false;
    std::size_t items = 0;
    std::string model_id;
    std::string fingerprint;
};

// Rebuilds index.bin unless the stored index already matches the catalog and
// the provider's model, in which case the provider is not called.
EmbedSummary embed_workspace(const WorkspacePaths& paths, EmbeddingProvider& provider, bool force = false);

// Explanation log: one Explanation per line, first occurrence of an id kept.
class ExplanationStore {
public:
    explicit ExplanationStore(std::optional<std::filesystem::path> path = std::nullopt);

    // Returns false when the id was already stored.
    bool add(const Explanation& explanation);
    std::optional<Explanation> find(const std::string& id) const;
    std::vector<Explanation> all() const;
    std::size_t size() const;

private:
    std::optional<std::filesystem::path> path_;
    mutable std::mutex mutex_;
    std::vector<std::string> order_;
    std::map<std::string, Explanation> entries_;
};

struct AspectFailure {
    std::string item_id;
    std::string code;
    std::string message;
};

struct AspectsSummary {
    std::size_t items = 0;
    std::size_t cached = 0;
    std::size_t extracted = 0;
    std::vector<AspectFailure> failed;
};

// Loaded pipeline state behind the CLI's explain/aspects commands and the
// HTTP service.
class Runtime {
public:
    // Loads catalog, histories and index from the data directory and fails with
    // Error{config} when the index is missing or stale.
    explicit Runtime(AppConfig config, std::shared_ptr<LlmProvider> llm = nullptr);

    const AppConfig& config() const { return config_; }
    const Catalog& catalog() const { return catalog_; }
    const EmbeddingIndex& index() const { return index_; }
    // Throws Error{lookup}.
    const UserHistory& history(const std::string& user_id) const;
    Gateway& gateway() { return *gateway_; }
    AspectCache& aspect_cache() { return *aspect_cache_; }
    ExplanationStore& explanations() { return explanations_; }
    RatingStore& ratings() { return ratings_; }

    // Generates, logs and registers one explanation.
    Explanation explain(const std::string& recommended_id, const std::string& user_id, ExplanationMethod method);

    // Extracts aspects for `item_ids` (all catalog items when empty); failures
    // are collected rather than thrown.
    AspectsSummary extract_all(const std::vector<std::string>& item_ids = {});

private:
    const std::vector<AspectExample>& examples();

    AppConfig config_;
    WorkspacePaths paths_;
    Catalog catalog_;
    std::map<std::string, UserHistory> histories_;
    EmbeddingIndex index_;
    PromptTemplates templates_;
    std::shared_ptr<AuditLog> audit_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<AspectCache> aspect_cache_;
    ExplanationStore explanations_;
    RatingStore ratings_;
    std::once_flag examples_once_;
    std::vector<AspectExample> examples_;
};

}  // namespace recexplain
