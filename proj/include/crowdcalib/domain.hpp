#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace crowdcalib {

using CameraId = std::string;
using EventId = std::string;
using PlatformId = std::string;

// ---------------------------------------------------------------------------
// Raster masks
// ---------------------------------------------------------------------------

/// Binary person/background raster, stored row-major with each row packed
/// into 64-bit words. Bits past `cols` in the last word of a row are always 0.
class GridMask {
public:
    GridMask() = default;
    GridMask(std::size_t rows, std::size_t cols, bool value = false);

    /// Builds a mask from one byte per pixel (row-major); nonzero means set.
    static GridMask from_bits(std::size_t rows, std::size_t cols, const std::vector<std::uint8_t>& bits);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return rows_ * cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    bool get(std::size_t r, std::size_t c) const noexcept
    {
        return (words_[r * stride_ + (c >> 6)] >> (c & 63)) & 1u;
    }
    void set(std::size_t r, std::size_t c, bool value) noexcept
    {
        auto& w = words_[r * stride_ + (c >> 6)];
        const std::uint64_t bit = std::uint64_t{1} << (c & 63);
        w = value ? (w | bit) : (w & ~bit);
    }

    /// Sets columns [c0, c1) of row r.
    void fill_span(std::size_t r, std::size_t c0, std::size_t c1) noexcept;

    /// Number of set bits in columns [c0, c1) of row r.
    std::size_t count_span(std::size_t r, std::size_t c0, std::size_t c1) const noexcept;

    std::size_t popcount() const noexcept;

    /// Unpacks to one byte (0/1) per pixel, row-major.
    std::vector<std::uint8_t> to_bits() const;

    /// Bitwise AND; dimensions must match.
    GridMask operator&(const GridMask& other) const;
    GridMask& operator&=(const GridMask& other);

    bool same_shape(const GridMask& other) const noexcept
    {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const GridMask&, const GridMask&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t stride_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Block-reduced mask; every value is in [0, 1].
struct PooledMap {
    std::size_t prows = 0;
    std::size_t pcols = 0;
    std::vector<double> values;

    double at(std::size_t j, std::size_t k) const { return values[j * pcols + k]; }
    void validate() const;
};

enum class PoolMode { Max, Mean };

std::string_view to_string(PoolMode mode);
PoolMode parse_pool_mode(std::string_view text);

/// Learned per-camera calibration weights over pooled cells.
struct WeightMap {
    CameraId camera;
    std::size_t prows = 0;
    std::size_t pcols = 0;
    std::size_t p = 1;
    std::size_t q = 1;
    double lambda = 0.0;
    PoolMode pool_mode = PoolMode::Max;
    std::vector<double> values;

    double at(std::size_t j, std::size_t k) const { return values[j * pcols + k]; }
    void validate() const;

    friend bool operator==(const WeightMap&, const WeightMap&) = default;
};

// ---------------------------------------------------------------------------
// Frame observations
// ---------------------------------------------------------------------------

struct DetectionBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 1.0;
    double h = 1.0;
    double conf = 1.0;
    int class_id = 0;

    void validate() const;
    friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

struct HeadPoint {
    double x = 0.0;
    double y = 0.0;
    double conf = 1.0;

    void validate() const;
    friend bool operator==(const HeadPoint&, const HeadPoint&) = default;
};

using ClassLogits = std::array<double, 4>;

using FramePayload = std::variant<GridMask, std::vector<DetectionBox>, std::vector<HeadPoint>, ClassLogits>;

enum class PayloadKind { Mask = 0, Boxes = 1, Points = 2, Logits = 3 };

/// Frames are sampled at -5 s, 0 s and +5 s around the peak-crowding instant.
inline constexpr std::array<int, 3> kFrameOffsets{-5, 0, 5};

bool is_valid_offset(int offset_s) noexcept;

/// Path token for an offset: m5, 0, p5.
std::string offset_token(int offset_s);
int parse_offset_token(std::string_view token);

struct FrameObservation {
    CameraId camera;
    EventId event_id;
    int offset_s = 0;
    FramePayload payload;

    PayloadKind kind() const noexcept { return static_cast<PayloadKind>(payload.index()); }
    void validate() const;
};

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

/// Fixed UTC offset in minutes.
struct TimeZoneOffset {
    int minutes = 0;
};

/// An instant plus the UTC offset it was recorded in.
struct Timestamp {
    std::int64_t utc_seconds = 0;
    TimeZoneOffset offset{};

    friend bool operator==(const Timestamp& a, const Timestamp& b) noexcept
    {
        return a.utc_seconds == b.utc_seconds;
    }
    friend auto operator<=>(const Timestamp& a, const Timestamp& b) noexcept
    {
        return a.utc_seconds <=> b.utc_seconds;
    }
};

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff](Z|+HH:MM|-HH:MM)`. Throws FormatError.
Timestamp parse_rfc3339(std::string_view text);

/// Formats in the timestamp's own offset, whole seconds.
std::string format_rfc3339(const Timestamp& t);

struct LocalTime {
    int year = 1970;
    int month = 1;
    int day = 1;
    int weekday = 0; // 0 = Monday
    int hour = 0;
    int minute = 0;
    int second = 0;
};

LocalTime to_local(const Timestamp& t, TimeZoneOffset tz);

inline constexpr int kBinsPerDay = 96;
inline constexpr int kWeeklyBins = 672;

/// Weekly 15-minute bin, Monday 00:00 local time = 0.
int bin_index(const Timestamp& t, TimeZoneOffset tz);
inline int bin_index(const Timestamp& t) { return bin_index(t, t.offset); }

// ---------------------------------------------------------------------------
// Events, levels, platform
// ---------------------------------------------------------------------------

struct ArrivalEvent {
    EventId event_id;
    PlatformId platform;
    Timestamp arrival_time;
    double occupancy = 0.0;
    std::vector<FrameObservation> frames;

    void validate() const;
};

enum class CrowdLevel : std::uint8_t { Empty = 0, Low = 1, Medium = 2, High = 3 };

std::string_view to_string(CrowdLevel level);
CrowdLevel parse_crowd_level(std::string_view text);

struct CrowdLevelScheme {
    PlatformId platform;
    double t50 = 0.0;
    double t75 = 0.0;
    double t98 = 0.0;

    void validate() const;
    friend bool operator==(const CrowdLevelScheme&, const CrowdLevelScheme&) = default;
};

/// Closed upper bounds: [0, t50], (t50, t75], (t75, t98], (t98, inf).
CrowdLevel crowd_level(double occupancy, const CrowdLevelScheme& scheme);

struct BinStat {
    double mu = 0.0;
    double sigma = 0.0;
};

struct WeeklyBinStats {
    PlatformId platform;
    std::array<BinStat, kWeeklyBins> entries{};
};

struct PlatformConfig {
    PlatformId platform;
    std::vector<CameraId> cameras;
    std::map<CameraId, GridMask> aoi;

    bool has_camera(const CameraId& camera) const;
    void validate() const;
};

} // namespace crowdcalib
