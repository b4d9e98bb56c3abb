#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace geoprompt::io {

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
// Fixed-point with `decimals` digits; used for human-facing percentage tables.
std::string format_fixed(double v, int decimals);

double parse_double(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view contents);

// Line-oriented reader that tracks 1-based line numbers and strips '\r'.
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace geoprompt::io
