#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mrnr {

/// Shortest-round-trip-safe decimal form of a double ("%.17g").
std::string format_double(double v);

std::vector<std::string> split_fields(std::string_view line, char sep = ',');

/// Strict parses; throw FormatError mentioning `what` on failure.
double parse_double(std::string_view s, const std::string& what);
long long parse_int(std::string_view s, const std::string& what);

/// Lines of a text file with trailing '\r' stripped; empty lines skipped.
std::vector<std::string> read_lines(const std::string& content);

}  // namespace mrnr
