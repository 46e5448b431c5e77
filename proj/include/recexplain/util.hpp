#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace recexplain {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, std::string_view delim);
std::size_t count_words(std::string_view s);

// Reads a whole file; throws Error{io} when unreadable.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Appends one line (a trailing newline is added) and flushes.
void append_line(const std::filesystem::path& path, std::string_view line);

// Splits file contents into lines, dropping a trailing '\r' from each.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace recexplain
