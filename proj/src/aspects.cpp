#include "recexplain/aspects.hpp"

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

namespace recexplain {

namespace {

// MovieLens 1M genre vocabulary plus plural forms.
const std::set<std::string>& generic_terms() {
    static const std::set<std::string> terms = {
        "action",     "actions",    "adventure",   "adventures", "animation",  "animations", "animated",
        "children's", "childrens",  "children",    "comedy",     "comedies",   "crime",      "crimes",
        "documentary", "documentaries", "drama",   "dramas",     "fantasy",    "fantasies",  "film-noir",
        "noir",       "horror",     "horrors",     "musical",    "musicals",   "mystery",    "mysteries",
        "romance",    "romances",   "sci-fi",      "scifi",      "thriller",   "thrillers",  "war",
        "wars",       "western",    "westerns",
    };
    return terms;
}

const std::regex& html_tag() {
    static const std::regex re("<[a-zA-Z/][^>]*>");
    return re;
}

std::string collapse_spaces(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::string clean_aspect(std::string s) {
    static const std::string lead = "\"'`*_";
    static const std::string tail = ".;:,!?\"'`*_";
    while (true) {
        std::string before = s;
        s = trim(s);
        while (!s.empty() && lead.find(s.front()) != std::string::npos) s.erase(0, 1);
        while (!s.empty() && tail.find(s.back()) != std::string::npos) s.pop_back();
        if (s == before) break;
    }
    return to_lower(collapse_spaces(s));
}

struct Marked {
    bool marked = false;
    bool numbered = false;
    long number = 0;
    std::string content;
};

Marked split_marker(const std::string& line) {
    Marked m{false, false, 0, line};
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < 10 && i < line.size() && (line[i] == '.' || line[i] == ')') &&
        (i + 1 == line.size() || std::isspace(static_cast<unsigned char>(line[i + 1])))) {
        m.marked = m.numbered = true;
        m.number = std::stol(line.substr(0, i));
        m.content = line.substr(i + 1);
        return m;
    }
    for (std::string_view bullet : {"-", "*", "\xE2\x80\xA2"}) {
        if (line.starts_with(bullet) &&
            (line.size() == bullet.size() || std::isspace(static_cast<unsigned char>(line[bullet.size()])))) {
            m.marked = true;
            m.content = line.substr(bullet.size());
            return m;
        }
    }
    return m;
}

std::string strip_label(const std::string& line) {
    static const std::regex label(R"(^\s*aspects\s*:\s*)", std::regex::icase);
    return std::regex_replace(line, label, "");
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : sep) + p;
    return out;
}

nlohmann::ordered_json cache_line(const AspectSet& set) {
    nlohmann::ordered_json j;
    j["item_id"] = set.item_id;
    j["aspects"] = set.aspects;
    j["model_id"] = set.model_id;
    j["template_version"] = set.template_version;
    j["raw_response"] = set.raw_response;
    return j;
}

}  // namespace

bool is_generic_aspect(const std::string& aspect) {
    auto a = to_lower(trim(aspect));
    if (a.find(' ') != std::string::npos) return false;
    return generic_terms().count(a) != 0;
}

void validate_example(const AspectExample& example) {
    auto fail = [&](const std::string& why) {
        return Error(ErrorCode::contract, "priming example '" + example.item_title + "': " + why);
    };
    if (trim(example.item_title).empty()) throw fail("empty title");
    if (example.aspects.size() < 2 || example.aspects.size() > 6) {
        throw fail("needs 2-6 aspects, has " + std::to_string(example.aspects.size()));
    }
    for (const auto& aspect : example.aspects) {
        if (is_generic_aspect(aspect)) throw fail("aspect '" + aspect + "' is a bare genre");
        if (aspect != to_lower(aspect)) throw fail("aspect '" + aspect + "' is not lowercase");
        const auto words = count_words(aspect);
        if (words < 2 || words > 6) throw fail("aspect '" + aspect + "' must have 2-6 words");
    }
}

std::vector<AspectExample> examples_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::config, "priming examples must be a JSON list");
    std::vector<AspectExample> examples;
    for (const auto& e : j) {
        try {
            examples.push_back({e.at("item_title").get<std::string>(), e.at("aspects").get<std::vector<std::string>>()});
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::config, std::string("malformed priming example: ") + ex.what());
        }
        validate_example(examples.back());
    }
    return examples;
}

std::vector<AspectExample> load_examples(const std::filesystem::path& path) {
    try {
        return examples_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, path.string() + ": " + e.what());
    }
}

std::string build_aspect_prompt(const Item& item, const std::vector<AspectExample>& examples,
                                const PromptTemplates& templates) {
    if (examples.size() != 3) {
        throw Error(ErrorCode::contract, "aspect prompt needs exactly 3 priming examples, got " +
                                             std::to_string(examples.size()), "aspects");
    }
    std::string block;
    for (const auto& example : examples) {
        validate_example(example);
        block += "Movie: " + example.item_title + "\nAspects:\n" + render_aspect_list(example.aspects) + "\n";
    }
    return render_template(templates.aspect, {{"instruction", templates.aspect_instruction},
                                              {"examples", block},
                                              {"title", display_title(item)},
                                              {"plot", trim(item.plot)}});
}

std::vector<std::string> parse_aspect_response(const std::string& raw) {
    if (std::regex_search(raw, html_tag())) {
        throw Error(ErrorCode::format, "aspect response contains HTML markup: " + raw, "aspects");
    }
    std::vector<std::string> lines;
    for (auto& line : split(raw, "\n")) {
        auto t = trim(line);
        if (!t.empty()) lines.push_back(std::move(t));
    }

    std::vector<Marked> marked;
    for (const auto& line : lines) marked.push_back(split_marker(line));
    auto first_marked = std::find_if(marked.begin(), marked.end(), [](const Marked& m) { return m.marked; });

    std::vector<std::string> candidates;
    if (first_marked != marked.end()) {
        // A completion of a prompt ending in "1." arrives with item 1 unmarked.
        if (!marked.front().marked && first_marked->numbered && first_marked->number == 2) {
            candidates.push_back(marked.front().content);
        }
        for (const auto& m : marked) {
            if (m.marked) candidates.push_back(m.content);
        }
    } else {
        for (const auto& line : lines) {
            for (auto& part : split(strip_label(line), ",")) candidates.push_back(std::move(part));
        }
    }

    std::vector<std::string> aspects;
    std::set<std::string> seen;
    std::size_t generic = 0;
    for (auto& candidate : candidates) {
        auto aspect = clean_aspect(candidate);
        if (aspect.empty() || count_words(aspect) > kMaxAspectWords) continue;
        if (is_generic_aspect(aspect)) {
            ++generic;
            continue;
        }
        if (!seen.insert(aspect).second) continue;
        aspects.push_back(std::move(aspect));
        if (aspects.size() == kMaxAspects) break;
    }
    if (aspects.empty()) {
        std::string why = generic > 0 ? "only generic genre aspects" : "no parseable aspects";
        throw Error(ErrorCode::parse, why + " in response: " + raw, "aspects");
    }
    return aspects;
}

std::string render_aspect_list(const std::vector<std::string>& aspects) {
    std::string out;
    for (std::size_t i = 0; i < aspects.size(); ++i) out += std::to_string(i + 1) + ". " + aspects[i] + "\n";
    return out;
}

std::string to_string(AspectSource source) {
    switch (source) {
        case AspectSource::llm: return "llm";
        case AspectSource::cache: return "cache";
        case AspectSource::manual: return "manual";
    }
    return "unknown";
}

AspectCache::AspectCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(*path_)) return;
    auto lines = read_lines(*path_);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            auto j = nlohmann::json::parse(lines[i]);
            AspectSet set{j.at("item_id").get<std::string>(),
                          j.at("aspects").get<std::vector<std::string>>(),
                          AspectSource::cache,
                          j.value("raw_response", std::string()),
                          j.at("model_id").get<std::string>(),
                          j.at("template_version").get<std::string>()};
            entries_[{set.item_id, set.template_version, set.model_id}] = std::move(set);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, path_->string() + ":" + std::to_string(i + 1) + ": " + e.what(), "aspects");
        }
    }
}

std::optional<AspectSet> AspectCache::find(const AspectCacheKey& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void AspectCache::put(const AspectSet& set) {
    std::lock_guard lock(mutex_);
    entries_[{set.item_id, set.template_version, set.model_id}] = set;
    if (!path_) return;
    std::string contents;
    for (const auto& [key, entry] : entries_) contents += cache_line(entry).dump() + "\n";
    write_file_atomic(*path_, contents);
}

std::size_t AspectCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::string AspectCache::to_jsonl() const {
    std::lock_guard lock(mutex_);
    std::string contents;
    for (const auto& [key, entry] : entries_) contents += cache_line(entry).dump() + "\n";
    return contents;
}

GenerationParams aspect_params(GenerationParams base) {
    base.max_tokens = kAspectMaxTokens;
    if (std::find(base.stop_sequences.begin(), base.stop_sequences.end(), "\nMovie:") == base.stop_sequences.end()) {
        base.stop_sequences.push_back("\nMovie:");
    }
    return base;
}

AspectSet extract_aspects(const Item& item, Gateway& gateway, const std::vector<AspectExample>& examples,
                          AspectCache& cache, const PromptTemplates& templates, const GenerationParams& params) {
    const AspectCacheKey key{item.id, templates.version, gateway.model_id()};
    if (auto hit = cache.find(key)) {
        hit->source = AspectSource::cache;
        return *hit;
    }
    const auto prompt = build_aspect_prompt(item, examples, templates);

    std::vector<std::string> raws;
    std::vector<std::string> failures;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto record = gateway.complete(prompt, params);
        raws.push_back(record.output);
        try {
            AspectSet set{item.id, parse_aspect_response(record.output), AspectSource::llm, record.output,
                          gateway.model_id(), templates.version};
            cache.put(set);
            return set;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::parse && e.code() != ErrorCode::format) throw;
            failures.push_back(e.what());
        }
    }
    throw Error(ErrorCode::extraction,
                "aspect extraction failed twice for item '" + item.id + "': response 1 = \"" + raws[0] +
                    "\", response 2 = \"" + raws[1] + "\" (" + join(failures, "; ") + ")",
                "aspects");
}

}  // namespace recexplain
