#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "recexplain/catalog.hpp"
#include "recexplain/transport.hpp"

namespace recexplain {

inline constexpr const char* kDefaultEmbeddingModel = "all-MiniLM-L6-v2";
inline constexpr std::size_t kDefaultTopK = 5;

// Unit-length dense vector. Construction normalizes.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    // Throws Error{contract} for empty, non-finite or zero vectors.
    static EmbeddingVector normalized(std::vector<double> raw);

    // Trusts the caller that `unit` already has norm 1 (used when reloading).
    static EmbeddingVector from_unit(std::vector<double> unit);

    std::span<const double> values() const { return values_; }
    std::size_t dimension() const { return values_.size(); }

    bool operator==(const EmbeddingVector&) const = default;

private:
    explicit EmbeddingVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

// Σ aᵢbᵢ; equals cosine similarity for unit vectors. Throws Error{contract} on
// dimension mismatch.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Embedding backend. Outputs need not be normalized but must be positionally
// aligned with `texts` and of equal length.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string model_id() const = 0;
    virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) = 0;
};

// Offline, deterministic provider: signed feature hashing of lowercase word
// tokens. Texts sharing words get similar vectors.
class HashingEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashingEmbeddingProvider(std::size_t dimension = 384, std::uint64_t seed = 0);

    std::string model_id() const override;
    std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;

    std::vector<double> embed_one(const std::string& text) const;

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

// Wire contract: POST {"model_id", "texts": [...]} -> {"vectors": [[...], ...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(HttpEndpoint endpoint, std::string model_id, RetryPolicy retry = {});

    std::string model_id() const override { return model_id_; }
    std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;

private:
    HttpEndpoint endpoint_;
    std::string model_id_;
    RetryPolicy retry_;
};

// Throws Error{contract} for blank text; backend failures propagate.
EmbeddingVector embed_text(EmbeddingProvider& provider, const std::string& text);

// "title. plot", or the title alone when the plot is empty.
std::string embedding_input(const Item& item);

// Digest of the model id and every item's embedding input. Two catalogs with
// the same fingerprint produce the same index.
std::string index_fingerprint(const Catalog& catalog, const std::string& model_id);

class EmbeddingIndex {
public:
    EmbeddingIndex() = default;
    // Throws Error{contract} if vectors disagree on dimension.
    EmbeddingIndex(std::string model_id, std::map<std::string, EmbeddingVector> vectors,
                   std::string fingerprint = {});

    const std::string& model_id() const { return model_id_; }
    const std::string& fingerprint() const { return fingerprint_; }
    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return vectors_.size(); }
    bool contains(const std::string& id) const { return vectors_.count(id) != 0; }
    // Throws Error{lookup}.
    const EmbeddingVector& at(const std::string& id) const;
    const std::map<std::string, EmbeddingVector>& vectors() const { return vectors_; }

    // Versioned binary layout: magic, version, model id, fingerprint,
    // dimension, count, then (id, dimension x float64 LE) records.
    std::string serialize() const;
    static EmbeddingIndex deserialize(std::string_view bytes);
    void save(const std::filesystem::path& path) const;
    static EmbeddingIndex load(const std::filesystem::path& path);

    bool operator==(const EmbeddingIndex&) const = default;

private:
    std::string model_id_;
    std::string fingerprint_;
    std::size_t dimension_ = 0;
    std::map<std::string, EmbeddingVector> vectors_;
};

struct IndexBuildOptions {
    std::size_t batch_size = 32;
    std::size_t max_concurrency = 4;
};

// Throws Error{empty_catalog} for an empty catalog and Error{partial_index}
// naming every item whose embedding failed.
EmbeddingIndex build_index(const Catalog& catalog, EmbeddingProvider& provider,
                           const IndexBuildOptions& options = {});

struct ScoredItem {
    std::string item_id;
    double score = 0.0;

    bool operator==(const ScoredItem&) const = default;
};

struct RelevantSelection {
    std::string recommended_id;
    std::vector<ScoredItem> ranked;  // score descending, ties by ascending id
    std::size_t k_requested = kDefaultTopK;

    bool operator==(const RelevantSelection&) const = default;
};

// Top-k history items by similarity to the recommended item. History is
// deduplicated and the recommended item itself is excluded.
RelevantSelection select_relevant(const EmbeddingIndex& index, const std::string& recommended_id,
                                  const UserHistory& history, std::size_t k = kDefaultTopK);

}  // namespace recexplain
