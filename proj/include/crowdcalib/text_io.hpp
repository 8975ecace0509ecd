#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::text {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// `%.17g`, for formats that pin the digit count.
std::string format_double17(double value);

/// Strict full-field parse; throws FormatError naming `what`.
double parse_double(std::string_view field, std::string_view what, std::size_t line);
long long parse_int(std::string_view field, std::string_view what, std::size_t line);

/// Splits on commas. Fields are not quoted in any format this library writes.
std::vector<std::string_view> split_csv(std::string_view line);

/// Splits on runs of spaces/tabs.
std::vector<std::string_view> split_ws(std::string_view line);

/// Splits text into lines, dropping a trailing '\r' on each; a final empty
/// line after the last newline is not returned.
std::vector<std::string_view> lines(std::string_view text);

/// Rejects identifiers that would break the CSV/path formats.
void check_identifier(std::string_view id, std::string_view what);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

} // namespace crowdcalib::text
