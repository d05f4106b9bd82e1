// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat "key = value" configuration files and exact number formatting.
// Lines starting with '#' and blank lines are ignored; duplicate keys are
// rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace occaug {

using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues parse_key_values(std::string_view text, std::string_view source = "config");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);

// Throws ValidationError listing every key not in `allowed`.
void reject_unknown_keys(const KeyValues& values, const std::set<std::string, std::less<>>& allowed,
                         std::string_view source);

// Shortest representation that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);
std::uint64_t parse_uint(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, creating parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace occaug
