#include "recexplain/catalog.hpp"

#include "recexplain/error.hpp"
#include "recexplain/util.hpp"

#include <algorithm>
#include <charconv>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace recexplain {

namespace {

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        if (c < 0x80) extra = 0;
        else if ((c >> 5) == 0x6) extra = 1;
        else if ((c >> 4) == 0xe) extra = 2;
        else if ((c >> 3) == 0x1e) extra = 3;
        else return false;
        if (i + extra >= s.size() && extra > 0) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
        }
        i += extra + 1;
    }
    return true;
}

// The MovieLens 1M files are Latin-1.
std::string latin1_to_utf8(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back(static_cast<char>(0xc0 | (c >> 6)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
        }
    }
    return out;
}

std::optional<long long> parse_int(std::string_view s) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::optional<int> year_from_title(const std::string& title) {
    static const std::regex trailing_year(R"(\((\d{4})\)\s*$)");
    std::smatch m;
    if (std::regex_search(title, m, trailing_year)) return std::stoi(m[1].str());
    return std::nullopt;
}

std::string json_id(const nlohmann::json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    throw Error(ErrorCode::parse, "id must be a string or integer");
}

Item parse_movielens_row(const std::string& line) {
    auto fields = split(line, "::");
    if (fields.size() != 3) throw Error(ErrorCode::parse, "expected id::title::genres");
    Item item;
    item.id = trim(fields[0]);
    item.title = trim(fields[1]);
    for (auto& g : split(fields[2], "|")) {
        auto genre = trim(g);
        if (!genre.empty()) item.genres.push_back(std::move(genre));
    }
    item.year = year_from_title(item.title);
    return item;
}

}  // namespace

std::string display_title(const Item& item) {
    static const std::regex trailing_year(R"(\s*\(\d{4}\)\s*$)");
    static const std::regex trailing_article(R"(^(.*), (The|A|An)$)");
    std::string title = std::regex_replace(trim(item.title), trailing_year, "");
    std::smatch m;
    if (std::regex_match(title, m, trailing_article)) title = m[2].str() + " " + m[1].str();
    return title;
}

std::string item_violation(const Item& item) {
    if (trim(item.id).empty()) return "empty id";
    if (trim(item.title).empty()) return "empty title";
    std::set<std::string> seen;
    for (const auto& g : item.genres) {
        if (!seen.insert(to_lower(trim(g))).second) return "duplicate genre '" + g + "'";
    }
    return {};
}

nlohmann::ordered_json to_json(const Item& item) {
    nlohmann::ordered_json j;
    j["id"] = item.id;
    j["title"] = item.title;
    j["plot"] = item.plot;
    j["genres"] = item.genres;
    j["year"] = item.year ? nlohmann::ordered_json(*item.year) : nlohmann::ordered_json(nullptr);
    j["poster_url"] =
        item.poster_url ? nlohmann::ordered_json(*item.poster_url) : nlohmann::ordered_json(nullptr);
    return j;
}

Item item_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::parse, "item must be a JSON object");
    Item item;
    if (!j.contains("id")) throw Error(ErrorCode::parse, "missing id");
    item.id = json_id(j.at("id"));
    if (j.contains("title") && !j.at("title").is_null()) item.title = j.at("title").get<std::string>();
    if (j.contains("plot") && !j.at("plot").is_null()) item.plot = j.at("plot").get<std::string>();
    if (j.contains("genres") && !j.at("genres").is_null()) {
        item.genres = j.at("genres").get<std::vector<std::string>>();
    }
    if (j.contains("year") && !j.at("year").is_null()) item.year = j.at("year").get<int>();
    if (j.contains("poster_url") && !j.at("poster_url").is_null()) {
        item.poster_url = j.at("poster_url").get<std::string>();
    }
    return item;
}

const Item* Catalog::find(const std::string& id) const {
    auto it = items_.find(id);
    return it == items_.end() ? nullptr : &it->second;
}

const Item& Catalog::at(const std::string& id) const {
    if (const Item* item = find(id)) return *item;
    throw Error(ErrorCode::lookup, "unknown item id '" + id + "'");
}

std::string Catalog::to_jsonl() const {
    std::string out;
    for (const auto& [id, item] : items_) {
        out += to_json(item).dump();
        out += '\n';
    }
    return out;
}

CatalogFormat parse_catalog_format(const std::string& name) {
    if (name == "jsonl") return CatalogFormat::jsonl;
    if (name == "movielens") return CatalogFormat::movielens;
    throw Error(ErrorCode::contract, "unsupported catalog format '" + name + "'");
}

IngestResult ingest_catalog(const std::filesystem::path& path, CatalogFormat format) {
    auto lines = read_lines(path);
    IngestResult result;
    std::map<std::string, Item> items;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        std::string line = lines[i];
        if (trim(line).empty()) continue;
        ++result.rows_read;
        try {
            Item item;
            if (format == CatalogFormat::jsonl) {
                item = item_from_json(nlohmann::json::parse(line));
            } else {
                if (!valid_utf8(line)) line = latin1_to_utf8(line);
                item = parse_movielens_row(line);
            }
            item.id = trim(item.id);
            if (auto why = item_violation(item); !why.empty()) {
                result.skipped.push_back({line_no, why});
                continue;
            }
            if (items.count(item.id)) {
                result.skipped.push_back({line_no, "duplicate id '" + item.id + "'"});
                continue;
            }
            items.emplace(item.id, std::move(item));
        } catch (const nlohmann::json::exception& e) {
            result.skipped.push_back({line_no, std::string("invalid JSON: ") + e.what()});
        } catch (const Error& e) {
            result.skipped.push_back({line_no, e.what()});
        }
    }
    if (items.empty()) {
        throw Error(ErrorCode::empty_catalog,
                    "no valid rows in " + path.string() + " (" + std::to_string(result.skipped.size()) +
                        " skipped)",
                    "catalog");
    }
    result.catalog = Catalog(std::move(items), path.string());
    return result;
}

ItemPatch patch_from_json(const nlohmann::json& j) {
    ItemPatch patch;
    auto field = [&](const char* key) { return j.contains(key) && !j.at(key).is_null(); };
    if (field("title")) patch.title = j.at("title").get<std::string>();
    if (field("plot")) patch.plot = j.at("plot").get<std::string>();
    if (field("genres")) patch.genres = j.at("genres").get<std::vector<std::string>>();
    if (field("year")) patch.year = j.at("year").get<int>();
    if (field("poster_url")) patch.poster_url = j.at("poster_url").get<std::string>();
    return patch;
}

MergeResult merge_metadata(const Catalog& catalog, const std::map<std::string, ItemPatch>& extra) {
    auto items = catalog.items();
    MergeResult result;
    for (const auto& [id, patch] : extra) {
        auto it = items.find(id);
        if (it == items.end()) {
            result.ignored_ids.push_back(id);
            continue;
        }
        Item updated = it->second;
        if (patch.title) updated.title = *patch.title;
        if (patch.plot) updated.plot = *patch.plot;
        if (patch.genres) updated.genres = *patch.genres;
        if (patch.year) updated.year = *patch.year;
        if (patch.poster_url) updated.poster_url = *patch.poster_url;
        if (auto why = item_violation(updated); !why.empty()) {
            result.rejected.push_back({0, id + ": " + why});
            continue;
        }
        it->second = std::move(updated);
    }
    result.catalog = Catalog(std::move(items), catalog.source());
    return result;
}

std::map<std::string, ItemPatch> load_metadata(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    std::map<std::string, ItemPatch> extra;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            auto j = nlohmann::json::parse(lines[i]);
            extra[json_id(j.at("id"))] = patch_from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse,
                        path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return extra;
}

std::vector<UserHistory> load_history(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    std::vector<UserHistory> histories;
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        auto fail = [&](const std::string& why) {
            return Error(ErrorCode::parse,
                         path.string() + ":" + std::to_string(i + 1) + ": " + why, "history");
        };
        auto fields = split(lines[i], "::");
        if (fields.size() < 2 || fields.size() > 4) throw fail("expected user::item[::rating[::timestamp]]");
        for (auto& f : fields) f = trim(f);
        if (fields[0].empty() || fields[1].empty()) throw fail("empty user or item id");

        Interaction interaction{fields[1], std::nullopt, std::nullopt};
        if (fields.size() > 2 && !fields[2].empty()) {
            auto rating = parse_int(fields[2]);
            if (!rating || *rating < 1 || *rating > 5) throw fail("rating must be an integer 1-5");
            interaction.rating = static_cast<int>(*rating);
        }
        if (fields.size() > 3 && !fields[3].empty()) {
            auto ts = parse_int(fields[3]);
            if (!ts) throw fail("timestamp must be an integer");
            interaction.timestamp = *ts;
        }
        auto [it, inserted] = slot.try_emplace(fields[0], histories.size());
        if (inserted) histories.push_back({fields[0], {}});
        histories[it->second].interactions.push_back(std::move(interaction));
    }
    return histories;
}

void check_history(const Catalog& catalog, const UserHistory& history) {
    std::vector<std::string> missing;
    for (const auto& interaction : history.interactions) {
        if (!catalog.contains(interaction.item_id)) missing.push_back(interaction.item_id);
    }
    if (missing.empty()) return;
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::lookup, "history of user '" + history.user_id + "' references unknown items: " + ids);
}

nlohmann::ordered_json to_json(const UserHistory& history) {
    nlohmann::ordered_json j;
    j["user_id"] = history.user_id;
    j["interactions"] = nlohmann::ordered_json::array();
    for (const auto& interaction : history.interactions) {
        nlohmann::ordered_json row;
        row["item_id"] = interaction.item_id;
        row["rating"] = interaction.rating ? nlohmann::ordered_json(*interaction.rating)
                                           : nlohmann::ordered_json(nullptr);
        row["timestamp"] = interaction.timestamp ? nlohmann::ordered_json(*interaction.timestamp)
                                                 : nlohmann::ordered_json(nullptr);
        j["interactions"].push_back(std::move(row));
    }
    return j;
}

UserHistory history_from_json(const nlohmann::json& j) {
    try {
        UserHistory history;
        history.user_id = j.at("user_id").get<std::string>();
        for (const auto& row : j.at("interactions")) {
            Interaction interaction;
            interaction.item_id = row.at("item_id").get<std::string>();
            if (row.contains("rating") && !row.at("rating").is_null()) interaction.rating = row.at("rating").get<int>();
            if (row.contains("timestamp") && !row.at("timestamp").is_null()) {
                interaction.timestamp = row.at("timestamp").get<std::int64_t>();
            }
            history.interactions.push_back(std::move(interaction));
        }
        return history;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("malformed history: ") + e.what(), "history");
    }
}

}  // namespace recexplain
