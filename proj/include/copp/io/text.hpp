#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace copp::io {

/// Splits on '\n'; a trailing '\r' on each line is dropped. A final empty
/// line after the last '\n' is not reported.
std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string_view> split_whitespace(std::string_view line);
std::vector<std::string_view> split_on(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::optional<double> parse_double(std::string_view token);
std::optional<long long> parse_int(std::string_view token);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace copp::io
