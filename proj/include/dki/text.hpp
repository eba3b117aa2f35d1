#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dki::text {

std::string to_lower(std::string_view s);

/// Collapses whitespace runs to one space and trims both ends.
std::string collapse_whitespace(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);

} // namespace dki::text
