#pragma once

// Small text helpers shared by manifests, configs and reports.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace invbench::text {

// Shortest representation that parses back to the same double.
std::string format_double(double value);
std::string format_list(const std::vector<double>& values);
std::string format_list(const std::vector<std::size_t>& values);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Throw ConfigError naming `what` on malformed input.
double parse_double(std::string_view s, std::string_view what);
std::uint64_t parse_u64(std::string_view s, std::string_view what);
int parse_int(std::string_view s, std::string_view what);
bool parse_bool(std::string_view s, std::string_view what);
std::vector<double> parse_double_list(std::string_view s, std::string_view what);
std::vector<std::size_t> parse_size_list(std::string_view s, std::string_view what);

}  // namespace invbench::text
