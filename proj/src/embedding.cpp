#include "recexplain/embedding.hpp"

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <future>
#include <set>

namespace recexplain {

namespace {

constexpr char kIndexMagic[8] = {'R', 'X', 'E', 'M', 'B', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw Error(ErrorCode::format, "embedding index truncated");
    }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto v = in_.substr(pos_, n);
        pos_ += n;
        return v;
    }
    std::uint64_t uint(int width) {
        auto b = bytes(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= std::uint64_t(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(uint(8)); }
    std::string str() { return std::string(bytes(static_cast<std::size_t>(uint(4)))); }
    bool done() const { return pos_ == in_.size(); }

private:
    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
    if (raw.empty()) throw Error(ErrorCode::contract, "embedding vector is empty");
    double sum = 0.0;
    for (double x : raw) {
        if (!std::isfinite(x)) throw Error(ErrorCode::contract, "embedding vector has non-finite entries");
        sum += x * x;
    }
    if (sum == 0.0) throw Error(ErrorCode::contract, "embedding vector has zero norm");
    const double norm = std::sqrt(sum);
    for (double& x : raw) x /= norm;
    return EmbeddingVector(std::move(raw));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<double> unit) { return EmbeddingVector(std::move(unit)); }

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw Error(ErrorCode::contract, "dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                                             std::to_string(b.dimension()));
    }
    double dot = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) dot += av[i] * bv[i];
    return dot;
}

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw Error(ErrorCode::contract, "embedding dimension must be positive");
}

std::string HashingEmbeddingProvider::model_id() const {
    return "hashing-v1-d" + std::to_string(dimension_) + "-s" + std::to_string(seed_);
}

std::vector<double> HashingEmbeddingProvider::embed_one(const std::string& text) const {
    std::vector<double> v(dimension_, 0.0);
    auto add = [&](std::string_view token) {
        const std::uint64_t h = fnv1a(token, seed_);
        v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
    };
    std::string token;
    std::size_t tokens = 0;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else if (!token.empty()) {
            add(token);
            token.clear();
            ++tokens;
        }
    }
    if (!token.empty()) {
        add(token);
        ++tokens;
    }
    if (tokens == 0) add(text);
    // A bucket collision can cancel every token; keep the vector nonzero.
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[fnv1a(text, seed_) % dimension_] = 1.0;
    return v;
}

std::vector<std::vector<double>> HashingEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) out.push_back(embed_one(text));
    return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEndpoint endpoint, std::string model_id, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)), retry_(retry) {}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
    nlohmann::json request{{"model_id", model_id_}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    auto response = with_retry(retry_, [&] { return post_json(endpoint_, request); });
    try {
        auto vectors = response.at("vectors").get<std::vector<std::vector<double>>>();
        if (vectors.size() != texts.size()) {
            throw TransportError("embedding backend returned " + std::to_string(vectors.size()) + " vectors for " +
                                     std::to_string(texts.size()) + " texts",
                                 false);
        }
        return vectors;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed embedding response: ") + e.what(), false);
    }
}

EmbeddingVector embed_text(EmbeddingProvider& provider, const std::string& text) {
    if (trim(text).empty()) throw Error(ErrorCode::contract, "cannot embed blank text", "embedding");
    std::vector<std::string> batch{text};
    auto raw = provider.embed_batch(batch);
    if (raw.size() != 1) throw TransportError("embedding backend returned a misaligned batch", false);
    return EmbeddingVector::normalized(std::move(raw.front()));
}

std::string embedding_input(const Item& item) {
    auto plot = trim(item.plot);
    return plot.empty() ? item.title : item.title + ". " + plot;
}

std::string index_fingerprint(const Catalog& catalog, const std::string& model_id) {
    std::string material = model_id;
    material.push_back('\0');
    for (const auto& [id, item] : catalog.items()) {
        material += id;
        material.push_back('\0');
        material += embedding_input(item);
        material.push_back('\0');
    }
    return sha256_hex(material);
}

EmbeddingIndex::EmbeddingIndex(std::string model_id, std::map<std::string, EmbeddingVector> vectors,
                               std::string fingerprint)
    : model_id_(std::move(model_id)), fingerprint_(std::move(fingerprint)), vectors_(std::move(vectors)) {
    for (const auto& [id, v] : vectors_) {
        if (dimension_ == 0) dimension_ = v.dimension();
        if (v.dimension() != dimension_) {
            throw Error(ErrorCode::contract, "item '" + id + "' has dimension " + std::to_string(v.dimension()) +
                                                 ", index has " + std::to_string(dimension_));
        }
    }
}

const EmbeddingVector& EmbeddingIndex::at(const std::string& id) const {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) throw Error(ErrorCode::lookup, "item '" + id + "' is not in the embedding index");
    return it->second;
}

std::string EmbeddingIndex::serialize() const {
    Writer w;
    w.bytes(kIndexMagic, sizeof kIndexMagic);
    w.u32(kIndexVersion);
    w.str(model_id_);
    w.str(fingerprint_);
    w.u32(static_cast<std::uint32_t>(dimension_));
    w.u64(vectors_.size());
    for (const auto& [id, v] : vectors_) {
        w.str(id);
        for (double x : v.values()) w.f64(x);
    }
    return w.take();
}

EmbeddingIndex EmbeddingIndex::deserialize(std::string_view bytes) {
    Reader r(bytes);
    if (r.bytes(sizeof kIndexMagic) != std::string_view(kIndexMagic, sizeof kIndexMagic)) {
        throw Error(ErrorCode::format, "not an embedding index");
    }
    if (auto version = r.uint(4); version != kIndexVersion) {
        throw Error(ErrorCode::format, "unsupported embedding index version " + std::to_string(version));
    }
    auto model_id = r.str();
    auto fingerprint = r.str();
    const auto dimension = static_cast<std::size_t>(r.uint(4));
    const auto count = r.uint(8);
    if (dimension == 0 && count > 0) throw Error(ErrorCode::format, "embedding index declares dimension 0");

    std::map<std::string, EmbeddingVector> vectors;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto id = r.str();
        std::vector<double> values(dimension);
        double norm2 = 0.0;
        for (auto& x : values) {
            x = r.f64();
            norm2 += x * x;
        }
        if (!(std::abs(std::sqrt(norm2) - 1.0) <= 1e-6)) {
            throw Error(ErrorCode::format, "vector for '" + id + "' is not unit length");
        }
        if (!vectors.emplace(id, EmbeddingVector::from_unit(std::move(values))).second) {
            throw Error(ErrorCode::format, "duplicate id '" + id + "' in embedding index");
        }
    }
    if (!r.done()) throw Error(ErrorCode::format, "trailing bytes after " + std::to_string(count) + " records");
    return EmbeddingIndex(std::move(model_id), std::move(vectors), std::move(fingerprint));
}

void EmbeddingIndex::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

EmbeddingIndex build_index(const Catalog& catalog, EmbeddingProvider& provider, const IndexBuildOptions& options) {
    if (catalog.empty()) throw Error(ErrorCode::empty_catalog, "cannot index an empty catalog", "embedding");
    const std::size_t batch_size = std::max<std::size_t>(1, options.batch_size);
    const std::size_t concurrency = std::max<std::size_t>(1, options.max_concurrency);

    std::vector<std::string> ids;
    std::vector<std::string> texts;
    for (const auto& [id, item] : catalog.items()) {
        ids.push_back(id);
        texts.push_back(embedding_input(item));
    }

    struct Outcome {
        std::optional<EmbeddingVector> vector;
        std::string error;
    };
    std::vector<Outcome> outcomes(ids.size());

    auto run_batch = [&](std::size_t begin, std::size_t end) {
        std::span<const std::string> slice(texts.data() + begin, end - begin);
        try {
            auto raw = provider.embed_batch(slice);
            if (raw.size() != slice.size()) throw TransportError("misaligned embedding batch", false);
            std::vector<EmbeddingVector> normalized;
            for (auto& r : raw) normalized.push_back(EmbeddingVector::normalized(std::move(r)));
            for (std::size_t i = begin; i < end; ++i) outcomes[i].vector = std::move(normalized[i - begin]);
            return;
        } catch (const std::exception&) {
            // Fall through and isolate the failing items one at a time.
        }
        for (std::size_t i = begin; i < end; ++i) {
            try {
                outcomes[i].vector = embed_text(provider, texts[i]);
            } catch (const std::exception& e) {
                outcomes[i].error = e.what();
            }
        }
    };

    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t b = 0; b < ids.size(); b += batch_size) batches.emplace_back(b, std::min(ids.size(), b + batch_size));
    for (std::size_t wave = 0; wave < batches.size(); wave += concurrency) {
        std::vector<std::future<void>> inflight;
        for (std::size_t j = wave; j < std::min(batches.size(), wave + concurrency); ++j) {
            inflight.push_back(std::async(std::launch::async, run_batch, batches[j].first, batches[j].second));
        }
        for (auto& f : inflight) f.get();
    }

    std::map<std::string, EmbeddingVector> vectors;
    std::string failed;
    std::size_t dimension = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& outcome = outcomes[i];
        if (outcome.vector && dimension == 0) dimension = outcome.vector->dimension();
        if (outcome.vector && outcome.vector->dimension() != dimension) {
            outcome.error = "dimension " + std::to_string(outcome.vector->dimension()) + " != " + std::to_string(dimension);
            outcome.vector.reset();
        }
        if (!outcome.vector) {
            failed += (failed.empty() ? "" : ", ") + ids[i] + " (" + outcome.error + ")";
            continue;
        }
        vectors.emplace(ids[i], std::move(*outcome.vector));
    }
    if (!failed.empty()) throw Error(ErrorCode::partial_index, "embedding failed for: " + failed, "embedding");
    return EmbeddingIndex(provider.model_id(), std::move(vectors), index_fingerprint(catalog, provider.model_id()));
}

RelevantSelection select_relevant(const EmbeddingIndex& index, const std::string& recommended_id,
                                  const UserHistory& history, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::contract, "k must be positive", "selection");
    const auto& target = index.at(recommended_id);

    std::set<std::string> seen;
    std::vector<ScoredItem> scored;
    for (const auto& interaction : history.interactions) {
        const auto& id = interaction.item_id;
        if (id == recommended_id || !seen.insert(id).second) continue;
        scored.push_back({id, cosine_similarity(target, index.at(id))});
    }

    auto better = [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item_id < b.item_id;
    };
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    scored.resize(take);
    return {recommended_id, std::move(scored), k};
}

}  // namespace recexplain
