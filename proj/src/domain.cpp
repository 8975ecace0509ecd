#include "crowdcalib/domain.hpp"

#include "crowdcalib/error.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

namespace crowdcalib {

namespace {

WarningSink& warning_sink()
{
    static WarningSink sink;
    return sink;
}

constexpr std::uint64_t span_mask(std::size_t lo, std::size_t hi) noexcept
{
    // bits [lo, hi) of a word, 0 <= lo < hi <= 64
    const std::uint64_t upper = hi == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << hi) - 1);
    return upper & ~((std::uint64_t{1} << lo) - 1);
}

bool in_unit_interval(double v) noexcept { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

} // namespace

void warn(const std::string& message)
{
    if (auto& sink = warning_sink()) {
        sink(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

WarningSink set_warning_sink(WarningSink sink)
{
    auto previous = std::move(warning_sink());
    warning_sink() = std::move(sink);
    return previous;
}

// ---------------------------------------------------------------------------

GridMask::GridMask(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), stride_((cols + 63) / 64), words_(rows * ((cols + 63) / 64), 0)
{
    if (value) {
        for (std::size_t r = 0; r < rows_; ++r) {
            fill_span(r, 0, cols_);
        }
    }
}

GridMask GridMask::from_bits(std::size_t rows, std::size_t cols, const std::vector<std::uint8_t>& bits)
{
    if (bits.size() != rows * cols) {
        throw ValidationError("GridMask: bit array length " + std::to_string(bits.size()) +
                              " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    GridMask mask(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (bits[r * cols + c] != 0) {
                mask.set(r, c, true);
            }
        }
    }
    return mask;
}

void GridMask::fill_span(std::size_t r, std::size_t c0, std::size_t c1) noexcept
{
    if (c0 >= c1) {
        return;
    }
    std::uint64_t* row = words_.data() + r * stride_;
    std::size_t w0 = c0 >> 6;
    const std::size_t w1 = (c1 - 1) >> 6;
    if (w0 == w1) {
        row[w0] |= span_mask(c0 & 63, ((c1 - 1) & 63) + 1);
        return;
    }
    row[w0] |= span_mask(c0 & 63, 64);
    for (++w0; w0 < w1; ++w0) {
        row[w0] = ~std::uint64_t{0};
    }
    row[w1] |= span_mask(0, ((c1 - 1) & 63) + 1);
}

std::size_t GridMask::count_span(std::size_t r, std::size_t c0, std::size_t c1) const noexcept
{
    if (c0 >= c1) {
        return 0;
    }
    const std::uint64_t* row = words_.data() + r * stride_;
    std::size_t w0 = c0 >> 6;
    const std::size_t w1 = (c1 - 1) >> 6;
    if (w0 == w1) {
        return static_cast<std::size_t>(std::popcount(row[w0] & span_mask(c0 & 63, ((c1 - 1) & 63) + 1)));
    }
    std::size_t n = static_cast<std::size_t>(std::popcount(row[w0] & span_mask(c0 & 63, 64)));
    for (++w0; w0 < w1; ++w0) {
        n += static_cast<std::size_t>(std::popcount(row[w0]));
    }
    n += static_cast<std::size_t>(std::popcount(row[w1] & span_mask(0, ((c1 - 1) & 63) + 1)));
    return n;
}

std::size_t GridMask::popcount() const noexcept
{
    std::size_t n = 0;
    for (auto w : words_) {
        n += static_cast<std::size_t>(std::popcount(w));
    }
    return n;
}

std::vector<std::uint8_t> GridMask::to_bits() const
{
    std::vector<std::uint8_t> bits(rows_ * cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            bits[r * cols_ + c] = get(r, c) ? 1 : 0;
        }
    }
    return bits;
}

GridMask GridMask::operator&(const GridMask& other) const
{
    GridMask out = *this;
    out &= other;
    return out;
}

GridMask& GridMask::operator&=(const GridMask& other)
{
    if (!same_shape(other)) {
        throw ValidationError("GridMask: AND of " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                              " with " + std::to_string(other.rows_) + "x" + std::to_string(other.cols_));
    }
    for (std::size_t i = 0; i < words_.size(); ++i) {
        words_[i] &= other.words_[i];
    }
    return *this;
}

void PooledMap::validate() const
{
    if (prows == 0 || pcols == 0) {
        throw ValidationError("PooledMap: dimensions must be positive");
    }
    if (values.size() != prows * pcols) {
        throw ValidationError("PooledMap: value count does not match dimensions");
    }
    for (double v : values) {
        if (!in_unit_interval(v)) {
            throw ValidationError("PooledMap: value outside [0,1]");
        }
    }
}

std::string_view to_string(PoolMode mode)
{
    return mode == PoolMode::Max ? "max" : "mean";
}

PoolMode parse_pool_mode(std::string_view text)
{
    if (text == "max" || text == "MAX") {
        return PoolMode::Max;
    }
    if (text == "mean" || text == "MEAN") {
        return PoolMode::Mean;
    }
    throw ValidationError("unknown pool mode '" + std::string(text) + "' (expected max or mean)");
}

void WeightMap::validate() const
{
    if (prows == 0 || pcols == 0) {
        throw ValidationError("WeightMap: dimensions must be positive");
    }
    if (values.size() != prows * pcols) {
        throw ValidationError("WeightMap: value count does not match dimensions");
    }
    if (p < 1 || q < 1) {
        throw ValidationError("WeightMap: pooling block sizes must be >= 1");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw ValidationError("WeightMap: lambda must be a finite nonnegative number");
    }
}

void DetectionBox::validate() const
{
    if (!in_unit_interval(conf)) {
        throw ValidationError("DetectionBox: conf outside [0,1]");
    }
    if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(w) || !std::isfinite(h)) {
        throw ValidationError("DetectionBox: w and h must be positive");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy)) {
        throw ValidationError("DetectionBox: non-finite center");
    }
    if (class_id < 0) {
        throw ValidationError("DetectionBox: negative class_id");
    }
}

void HeadPoint::validate() const
{
    if (!in_unit_interval(conf)) {
        throw ValidationError("HeadPoint: conf outside [0,1]");
    }
    if (!std::isfinite(x) || !std::isfinite(y)) {
        throw ValidationError("HeadPoint: non-finite coordinates");
    }
}

bool is_valid_offset(int offset_s) noexcept
{
    return offset_s == -5 || offset_s == 0 || offset_s == 5;
}

std::string offset_token(int offset_s)
{
    switch (offset_s) {
    case -5: return "m5";
    case 0: return "0";
    case 5: return "p5";
    default: throw ValidationError("invalid frame offset " + std::to_string(offset_s));
    }
}

int parse_offset_token(std::string_view token)
{
    if (token == "m5") return -5;
    if (token == "0") return 0;
    if (token == "p5") return 5;
    throw ValidationError("invalid frame offset token '" + std::string(token) + "'");
}

void FrameObservation::validate() const
{
    if (!is_valid_offset(offset_s)) {
        throw ValidationError("FrameObservation: offset_s must be one of -5, 0, 5 (got " +
                              std::to_string(offset_s) + ")");
    }
    if (camera.empty() || event_id.empty()) {
        throw ValidationError("FrameObservation: empty camera or event_id");
    }
    switch (kind()) {
    case PayloadKind::Mask:
        if (std::get<GridMask>(payload).empty()) {
            throw ValidationError("FrameObservation: empty mask");
        }
        break;
    case PayloadKind::Boxes:
        for (const auto& b : std::get<std::vector<DetectionBox>>(payload)) b.validate();
        break;
    case PayloadKind::Points:
        for (const auto& p : std::get<std::vector<HeadPoint>>(payload)) p.validate();
        break;
    case PayloadKind::Logits:
        for (double v : std::get<ClassLogits>(payload)) {
            if (!std::isfinite(v)) throw ValidationError("FrameObservation: non-finite logit");
        }
        break;
    }
}

// ---------------------------------------------------------------------------

Timestamp parse_rfc3339(std::string_view text)
{
    auto fail = [&](const char* why) -> FormatError {
        return FormatError("invalid RFC3339 timestamp '" + std::string(text) + "': " + why);
    };
    auto digits = [&](std::size_t pos, std::size_t n) -> int {
        if (pos + n > text.size()) throw fail("truncated");
        int v = 0;
        for (std::size_t i = pos; i < pos + n; ++i) {
            const char ch = text[i];
            if (ch < '0' || ch > '9') throw fail("expected digit");
            v = v * 10 + (ch - '0');
        }
        return v;
    };
    auto expect = [&](std::size_t pos, char a, char b = '\0') {
        if (pos >= text.size() || (text[pos] != a && (b == '\0' || text[pos] != b))) throw fail("unexpected separator");
    };

    const int year = digits(0, 4);
    expect(4, '-');
    const int month = digits(5, 2);
    expect(7, '-');
    const int day = digits(8, 2);
    expect(10, 'T', 't');
    const int hour = digits(11, 2);
    expect(13, ':');
    const int minute = digits(14, 2);
    expect(16, ':');
    const int second = digits(17, 2);
    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        if (pos == start) throw fail("empty fraction");
    }
    if (pos >= text.size()) throw fail("missing UTC offset");
    int offset = 0;
    if (text[pos] == 'Z' || text[pos] == 'z') {
        ++pos;
    } else if (text[pos] == '+' || text[pos] == '-') {
        const int sign = text[pos] == '-' ? -1 : 1;
        const int oh = digits(pos + 1, 2);
        expect(pos + 3, ':');
        const int om = digits(pos + 4, 2);
        if (oh > 23 || om > 59) throw fail("offset out of range");
        offset = sign * (oh * 60 + om);
        pos += 6;
    } else {
        throw fail("bad UTC offset");
    }
    if (pos != text.size()) throw fail("trailing characters");

    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok()) throw fail("invalid calendar date");
    if (hour > 23 || minute > 59 || second > 60) throw fail("time of day out of range");

    const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
    const std::int64_t local = days * 86400 + hour * 3600 + minute * 60 + std::min(second, 59);
    return Timestamp{local - std::int64_t{offset} * 60, TimeZoneOffset{offset}};
}

LocalTime to_local(const Timestamp& t, TimeZoneOffset tz)
{
    using namespace std::chrono;
    const std::int64_t local = t.utc_seconds + std::int64_t{tz.minutes} * 60;
    std::int64_t days = local / 86400;
    std::int64_t secs = local % 86400;
    if (secs < 0) {
        secs += 86400;
        --days;
    }
    const sys_days sd{std::chrono::days{days}};
    const year_month_day ymd{sd};
    const weekday wd{sd};
    LocalTime lt;
    lt.year = static_cast<int>(ymd.year());
    lt.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
    lt.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
    lt.weekday = static_cast<int>((wd.c_encoding() + 6) % 7);
    lt.hour = static_cast<int>(secs / 3600);
    lt.minute = static_cast<int>((secs % 3600) / 60);
    lt.second = static_cast<int>(secs % 60);
    return lt;
}

std::string format_rfc3339(const Timestamp& t)
{
    const LocalTime lt = to_local(t, t.offset);
    char buf[40];
    if (t.offset.minutes == 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", lt.year, lt.month, lt.day, lt.hour,
                      lt.minute, lt.second);
    } else {
        const int m = std::abs(t.offset.minutes);
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d%c%02d:%02d", lt.year, lt.month, lt.day,
                      lt.hour, lt.minute, lt.second, t.offset.minutes < 0 ? '-' : '+', m / 60, m % 60);
    }
    return buf;
}

int bin_index(const Timestamp& t, TimeZoneOffset tz)
{
    const LocalTime lt = to_local(t, tz);
    return lt.weekday * kBinsPerDay + lt.hour * 4 + lt.minute / 15;
}

// ---------------------------------------------------------------------------

void ArrivalEvent::validate() const
{
    if (event_id.empty()) {
        throw ValidationError("ArrivalEvent: empty event_id");
    }
    if (!(occupancy >= 0.0) || !std::isfinite(occupancy)) {
        throw ValidationError("ArrivalEvent " + event_id + ": occupancy must be a finite nonnegative number");
    }
    std::map<std::pair<CameraId, PayloadKind>, int> per_camera;
    for (const auto& f : frames) {
        if (f.event_id != event_id) {
            throw ValidationError("ArrivalEvent " + event_id + ": frame references event " + f.event_id);
        }
        f.validate();
        if (++per_camera[{f.camera, f.kind()}] > 3) {
            throw ValidationError("ArrivalEvent " + event_id + ": more than 3 frames for camera " + f.camera);
        }
    }
}

std::string_view to_string(CrowdLevel level)
{
    switch (level) {
    case CrowdLevel::Empty: return "EMPTY";
    case CrowdLevel::Low: return "LOW";
    case CrowdLevel::Medium: return "MEDIUM";
    case CrowdLevel::High: return "HIGH";
    }
    return "?";
}

CrowdLevel parse_crowd_level(std::string_view text)
{
    if (text == "EMPTY" || text == "0") return CrowdLevel::Empty;
    if (text == "LOW" || text == "1") return CrowdLevel::Low;
    if (text == "MEDIUM" || text == "2") return CrowdLevel::Medium;
    if (text == "HIGH" || text == "3") return CrowdLevel::High;
    throw ValidationError("unknown crowd level '" + std::string(text) + "'");
}

void CrowdLevelScheme::validate() const
{
    for (double t : {t50, t75, t98}) {
        if (!std::isfinite(t)) throw ValidationError("CrowdLevelScheme: non-finite threshold");
    }
    if (!(0.0 <= t50 && t50 <= t75 && t75 <= t98)) {
        throw ValidationError("CrowdLevelScheme " + platform + ": thresholds must satisfy 0 <= t50 <= t75 <= t98");
    }
}

CrowdLevel crowd_level(double occupancy, const CrowdLevelScheme& scheme)
{
    if (!(occupancy >= 0.0)) {
        throw ValidationError("crowd_level: occupancy must be nonnegative");
    }
    if (occupancy <= scheme.t50) return CrowdLevel::Empty;
    if (occupancy <= scheme.t75) return CrowdLevel::Low;
    if (occupancy <= scheme.t98) return CrowdLevel::Medium;
    return CrowdLevel::High;
}

bool PlatformConfig::has_camera(const CameraId& camera) const
{
    return std::find(cameras.begin(), cameras.end(), camera) != cameras.end();
}

void PlatformConfig::validate() const
{
    if (platform.empty()) {
        throw ValidationError("PlatformConfig: empty platform id");
    }
    for (const auto& [camera, mask] : aoi) {
        if (!has_camera(camera)) {
            throw ValidationError("PlatformConfig: AOI for unknown camera " + camera);
        }
        if (mask.empty()) {
            throw ValidationError("PlatformConfig: empty AOI for camera " + camera);
        }
    }
}

} // namespace crowdcalib
