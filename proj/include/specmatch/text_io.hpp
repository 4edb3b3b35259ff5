#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace specmatch::text {

/// Shortest-round-trip is not what we want for reports: callers pick the
/// number of significant digits so output files are stable across runs.
std::string format_double(double value, int significant_digits);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

/// Strict numeric parsing; throws Error{parse} with `context` on failure.
double parse_double(std::string_view token, std::string_view context);
long long parse_int(std::string_view token, std::string_view context);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace specmatch::text
