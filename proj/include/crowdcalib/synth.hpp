#pragma once

#include "crowdcalib/domain.hpp"
#include "crowdcalib/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::synth {

/// Platform region: far edge at the top (row far_y), near edge at the bottom.
struct Trapezoid {
    double far_y = 0.0, far_x0 = 0.0, far_x1 = 0.0;
    double near_y = 0.0, near_x0 = 0.0, near_x1 = 0.0;

    bool contains(double x, double y) const noexcept;
    double area() const noexcept;
};

/// Trapezoid covering the lower part of a rows x cols image.
Trapezoid default_polygon(std::size_t rows, std::size_t cols);

struct SynthConfig {
    PlatformId platform = "SYN1";
    std::size_t n_cameras = 1;
    std::size_t rows = 216;
    std::size_t cols = 384;
    std::optional<Trapezoid> polygon; // default_polygon(rows, cols) when absent
    /// Far-edge person area / near-edge person area, in (0, 1].
    double depth_scale = 0.25;
    /// Pixel area of one person at the near edge.
    double person_area = 150.0;
    int occupancy_min = 0;
    int occupancy_max = 60;
    std::size_t n_events = 120;
    std::uint64_t seed = 1;
    double miss_rate = 0.0;
    double overlap_factor = 0.0;
    /// Std. dev. of per-frame blob movement, pixels.
    double jitter_px = 1.0;
    /// Probability that a camera has no frames for an event.
    double camera_dropout = 0.0;
    double logit_margin = 2.0;
    double logit_noise = 0.5;
    bool emit_masks = true;
    bool emit_boxes = true;
    bool emit_points = true;
    bool emit_logits = true;
    std::string start_time = "2024-06-03T06:00:00-04:00";
    int spacing_s = 300;

    Trapezoid effective_polygon() const { return polygon ? *polygon : default_polygon(rows, cols); }
    std::vector<CameraId> camera_ids() const;
    void validate() const;
};

/// JSON object with any subset of the SynthConfig fields; unknown keys are errors.
SynthConfig read_synth_config(std::string_view json_text);
std::string write_synth_config(const SynthConfig& config);

struct Blob {
    double cx = 0.0;
    double cy = 0.0;
    double a = 0.0; // horizontal semi-axis
    double b = 0.0; // vertical semi-axis
};

/// Deterministic scene source. Events are generated on demand, so large
/// configurations never need every mask in memory at once.
class SceneGenerator {
public:
    explicit SceneGenerator(SynthConfig config);

    const SynthConfig& config() const noexcept { return config_; }
    std::size_t event_count() const noexcept { return occupancy_.size(); }
    const GridMask& aoi() const noexcept { return aoi_; }
    PlatformConfig platform_config() const;
    const std::optional<CrowdLevelScheme>& scheme() const noexcept { return scheme_; }
    /// mu = (min+max)/2 and sigma = (max-min)/sqrt(12) in every bin.
    WeeklyBinStats bin_stats() const;

    /// 0 at the near edge, 1 at the far edge.
    double depth(double y) const noexcept;
    /// Person area multiplier at row y: 1 - (1 - depth_scale) * depth(y).
    double area_scale(double y) const noexcept;
    Blob blob_at(double cx, double cy) const noexcept;

    /// True person positions of event i before jitter.
    std::vector<Blob> event_blobs(std::size_t i) const;

    /// Event i with all enabled frame payloads. Thread-safe.
    ArrivalEvent event(std::size_t i) const;

private:
    bool in_aoi(double x, double y) const noexcept;

    SynthConfig config_;
    Trapezoid polygon_;
    GridMask aoi_;
    std::vector<int> occupancy_;
    std::vector<Timestamp> times_;
    std::optional<CrowdLevelScheme> scheme_;
};

/// Union of ellipses; pixel (r, c) is set iff (c, r) lies inside a blob.
GridMask render_blobs(const std::vector<Blob>& blobs, std::size_t rows, std::size_t cols);

/// Whole dataset in memory.
ingest::Dataset generate(const SynthConfig& config);

/// Writes the dataset to a data directory one event at a time.
void write_synthetic_dataset(const SynthConfig& config, const std::filesystem::path& dir);

} // namespace crowdcalib::synth
