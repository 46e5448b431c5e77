#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace recexplain {

struct Item {
    std::string id;
    std::string title;
    std::string plot;
    std::vector<std::string> genres;
    std::optional<int> year;
    std::optional<std::string> poster_url;

    bool operator==(const Item&) const = default;
};

// Title as it should read in prose: MovieLens "Godfather, The (1972)" becomes
// "The Godfather". Titles without those conventions are returned trimmed.
std::string display_title(const Item& item);

// Empty when the item satisfies its invariants, otherwise the reason it does not.
std::string item_violation(const Item& item);

nlohmann::ordered_json to_json(const Item& item);
Item item_from_json(const nlohmann::json& j);

// Immutable after construction; iteration is in ascending id order.
class Catalog {
public:
    Catalog() = default;
    Catalog(std::map<std::string, Item> items, std::string source)
        : items_(std::move(items)), source_(std::move(source)) {}

    const Item* find(const std::string& id) const;
    // Throws Error{lookup} for unknown ids.
    const Item& at(const std::string& id) const;
    bool contains(const std::string& id) const { return items_.count(id) != 0; }

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const std::map<std::string, Item>& items() const { return items_; }
    const std::string& source() const { return source_; }

    // One JSON object per line, ascending id.
    std::string to_jsonl() const;

    bool operator==(const Catalog& other) const { return items_ == other.items_; }

private:
    std::map<std::string, Item> items_;
    std::string source_;
};

enum class CatalogFormat { jsonl, movielens };

CatalogFormat parse_catalog_format(const std::string& name);

struct RowReport {
    std::size_t line = 0;
    std::string reason;
};

struct IngestResult {
    Catalog catalog;
    std::size_t rows_read = 0;
    std::vector<RowReport> skipped;
};

// Rows that violate Item invariants (or repeat an id) are skipped and reported.
// Throws Error{io} if the file is unreadable and Error{empty_catalog} if no
// row survives.
IngestResult ingest_catalog(const std::filesystem::path& path, CatalogFormat format);

// Partial Item fields keyed by item id. Absent fields leave the item untouched.
struct ItemPatch {
    std::optional<std::string> title;
    std::optional<std::string> plot;
    std::optional<std::vector<std::string>> genres;
    std::optional<int> year;
    std::optional<std::string> poster_url;
};

ItemPatch patch_from_json(const nlohmann::json& j);

struct MergeResult {
    Catalog catalog;
    std::vector<std::string> ignored_ids;   // not present in the catalog
    std::vector<RowReport> rejected;        // patch would break an invariant
};

MergeResult merge_metadata(const Catalog& catalog, const std::map<std::string, ItemPatch>& extra);

// Metadata file: one JSON object per line with an "id" plus any Item fields.
std::map<std::string, ItemPatch> load_metadata(const std::filesystem::path& path);

struct Interaction {
    std::string item_id;
    std::optional<int> rating;
    std::optional<std::int64_t> timestamp;

    bool operator==(const Interaction&) const = default;
};

struct UserHistory {
    std::string user_id;
    std::vector<Interaction> interactions;

    bool operator==(const UserHistory&) const = default;
};

// MovieLens ratings layout `user::item::rating::timestamp`; rating and
// timestamp may be omitted or empty. Users appear in order of first occurrence
// and interactions keep file order. Throws Error{parse} naming the line.
std::vector<UserHistory> load_history(const std::filesystem::path& path);

// Throws Error{lookup} listing history items missing from the catalog.
void check_history(const Catalog& catalog, const UserHistory& history);

nlohmann::ordered_json to_json(const UserHistory& history);
UserHistory history_from_json(const nlohmann::json& j);

}  // namespace recexplain
