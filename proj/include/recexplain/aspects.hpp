#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "recexplain/catalog.hpp"
#include "recexplain/llm_gateway.hpp"
#include "recexplain/templates.hpp"

namespace recexplain {

inline constexpr std::size_t kMaxAspects = 10;
inline constexpr std::size_t kMaxAspectWords = 8;

// A few-shot priming example.
struct AspectExample {
    std::string item_title;
    std::vector<std::string> aspects;  // 2-6 entries, each 2-6 lowercase words
};

// Single-word aspects that only restate a MovieLens genre ("drama",
// "action", ...). Multi-word aspects such as "family drama" are not generic.
bool is_generic_aspect(const std::string& aspect);

// Throws Error{contract} describing the first broken invariant.
void validate_example(const AspectExample& example);

std::vector<AspectExample> examples_from_json(const nlohmann::json& j);
std::vector<AspectExample> load_examples(const std::filesystem::path& path);

// Requires exactly three examples.
std::string build_aspect_prompt(const Item& item, const std::vector<AspectExample>& examples,
                                const PromptTemplates& templates = PromptTemplates::defaults());

// Accepts numbered (`1.`, `1)`), bulleted (`-`, `*`, `•`) or comma-separated
// responses. Output is lowercase, deduplicated in first-seen order, free of
// generic and over-long aspects, and capped at kMaxAspects. Throws
// Error{format} for HTML-bearing text and Error{parse} when nothing usable
// remains.
std::vector<std::string> parse_aspect_response(const std::string& raw);

// Numbered-list rendering that parse_aspect_response maps back to `aspects`.
std::string render_aspect_list(const std::vector<std::string>& aspects);

enum class AspectSource { llm, cache, manual };
std::string to_string(AspectSource source);

struct AspectSet {
    std::string item_id;
    std::vector<std::string> aspects;
    AspectSource source = AspectSource::llm;
    std::string raw_response;
    std::string model_id;
    std::string template_version;
};

struct AspectCacheKey {
    std::string item_id;
    std::string template_version;
    std::string model_id;

    auto operator<=>(const AspectCacheKey&) const = default;
};

// Keyed by (item, template version, model). When backed by a file, every put
// rewrites it atomically; on load the last line for a key wins.
class AspectCache {
public:
    AspectCache() = default;
    explicit AspectCache(std::filesystem::path path);

    std::optional<AspectSet> find(const AspectCacheKey& key) const;
    void put(const AspectSet& set);
    std::size_t size() const;

    // The cache file's contents: one JSON object per line, key order.
    std::string to_jsonl() const;

private:
    std::optional<std::filesystem::path> path_;
    mutable std::mutex mutex_;
    std::map<AspectCacheKey, AspectSet> entries_;
};

GenerationParams aspect_params(GenerationParams base = {});

// Cache hit: returns the cached set (source = cache) without a gateway call.
// Otherwise prompts, parses (one retry on an unusable response), caches and
// returns. Two unusable responses raise Error{extraction} quoting both.
AspectSet extract_aspects(const Item& item, Gateway& gateway, const std::vector<AspectExample>& examples,
                          AspectCache& cache, const PromptTemplates& templates = PromptTemplates::defaults(),
                          const GenerationParams& params = aspect_params());

}  // namespace recexplain
