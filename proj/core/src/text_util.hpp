#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wsloc::text {

std::string_view trim(std::string_view s);
/// Splits on commas; no quoting support (the formats here never quote).
std::vector<std::string> split(std::string_view line, char sep = ',');
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);
/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
/// Strips a trailing '\r' left by CRLF files.
std::string_view strip_cr(std::string_view s);

}  // namespace wsloc::text
