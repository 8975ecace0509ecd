#include "crowdcalib/text_io.hpp"

#include "crowdcalib/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace crowdcalib::text {

std::string format_double(double value)
{
    if (value == 0.0) {
        value = 0.0; // normalize -0
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string format_double17(double value)
{
    if (value == 0.0) {
        value = 0.0;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

namespace {

FormatError field_error(std::string_view field, std::string_view what, std::size_t line)
{
    return FormatError("line " + std::to_string(line) + ": invalid " + std::string(what) + " '" +
                           std::string(field) + "'",
                       line);
}

} // namespace

double parse_double(std::string_view field, std::string_view what, std::size_t line)
{
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || field.empty()) {
        throw field_error(field, what, line);
    }
    return v;
}

long long parse_int(std::string_view field, std::string_view what, std::size_t line)
{
    long long v = 0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty()) {
        throw field_error(field, what, line);
    }
    return v;
}

std::vector<std::string_view> split_csv(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<std::string_view> split_ws(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

std::vector<std::string_view> lines(std::string_view text)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        start = nl + 1;
    }
    return out;
}

void check_identifier(std::string_view id, std::string_view what)
{
    if (id.empty()) {
        throw ValidationError(std::string(what) + " is empty");
    }
    for (char ch : id) {
        if (ch == ',' || ch == '\n' || ch == '\r' || ch == '/' || ch == ' ' || ch == '\t' || ch == '"') {
            throw ValidationError(std::string(what) + " '" + std::string(id) +
                                  "' contains a character not allowed in identifiers");
        }
    }
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

} // namespace crowdcalib::text
