#pragma once

#include "crowdcalib/domain.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::ingest {

// ---------------------------------------------------------------------------
// PGM masks (P5 binary, P2 ASCII). Any nonzero sample is a person pixel.
// ---------------------------------------------------------------------------

GridMask read_mask_pgm(std::string_view bytes);

/// Writes P5 with maxval 255 (0 / 255 samples).
std::string write_mask_pgm(const GridMask& mask);

// ---------------------------------------------------------------------------
// Observations: one JSON object per line.
// ---------------------------------------------------------------------------

/// Throws FormatError carrying the 1-based line number. Blank lines are skipped.
std::vector<FrameObservation> read_detections_jsonl(std::string_view text);

/// Mask payloads cannot be written to JSONL and are rejected.
std::string write_detections_jsonl(const std::vector<FrameObservation>& frames);

// ---------------------------------------------------------------------------
// Ground truth: platform,arrival_time,occupancy[,event_id]
// ---------------------------------------------------------------------------

struct OccupancyRecord {
    PlatformId platform;
    Timestamp arrival_time;
    std::string arrival_time_text;
    double occupancy = 0.0;
    EventId event_id;
};

/// Event id used when the ground-truth file has no event_id column:
/// `<platform>_<YYYYMMDDTHHMMSS>` in the timestamp's own offset.
EventId default_event_id(const PlatformId& platform, const Timestamp& arrival_time);

std::vector<OccupancyRecord> read_occupancy_csv(std::string_view text);
std::string write_occupancy_csv(const std::vector<OccupancyRecord>& records);

// ---------------------------------------------------------------------------
// Weekly bin statistics: platform,bin_index,mu,sigma (672 rows per platform)
// ---------------------------------------------------------------------------

std::map<PlatformId, WeeklyBinStats> read_weekly_stats_csv(std::string_view text);
std::string write_weekly_stats_csv(const std::vector<WeeklyBinStats>& stats);

// ---------------------------------------------------------------------------
// Area of interest
// ---------------------------------------------------------------------------

struct AoiReport {
    std::size_t removed_outside_aoi = 0;
    std::size_t dropped_out_of_image = 0;
};

/// Masks are ANDed with the AOI. Boxes and points are kept iff their center,
/// rounded to the nearest pixel, is an AOI pixel; centers outside the image
/// rectangle [0,cols]x[0,rows] are dropped and counted, centers on the
/// boundary are clamped to the last pixel. Logits pass through.
FrameObservation apply_aoi(const FrameObservation& obs, const GridMask& aoi, AoiReport* report = nullptr);

// ---------------------------------------------------------------------------
// Data directory
// ---------------------------------------------------------------------------

struct Dataset {
    PlatformConfig platform_config;
    std::vector<ArrivalEvent> events;
    std::optional<CrowdLevelScheme> scheme;
    std::optional<WeeklyBinStats> bin_stats;

    const ArrivalEvent* find_event(const EventId& id) const;
    void validate() const;
};

/// File layout of a data directory.
struct DataLayout {
    std::filesystem::path root;

    std::filesystem::path platform_file() const { return root / "platform.json"; }
    std::filesystem::path ground_truth_file() const { return root / "ground_truth.csv"; }
    std::filesystem::path observations_file() const { return root / "observations.jsonl"; }
    std::filesystem::path stats_file() const { return root / "weekly_stats.csv"; }
    std::filesystem::path scheme_file() const { return root / "scheme.csv"; }
    std::filesystem::path aoi_file(const CameraId& camera) const { return root / "aoi" / (camera + ".pgm"); }
    std::filesystem::path mask_file(const CameraId& camera, const EventId& event, int offset_s) const
    {
        return root / "masks" / camera / event / (offset_token(offset_s) + ".pgm");
    }
};

struct MaskRef {
    CameraId camera;
    EventId event_id;
    int offset_s = 0;
    std::filesystem::path path;
};

std::string write_platform_json(const PlatformConfig& config);

/// Reads platform.json and every aoi/<camera>.pgm that exists.
PlatformConfig read_platform(const DataLayout& layout);

/// Enumerates masks/<camera>/<event>/<offset>.pgm, sorted by (camera, event, offset).
std::vector<MaskRef> list_masks(const DataLayout& layout);

struct LoadOptions {
    bool load_masks = false;
    bool apply_aoi = true;
};

/// Loads and validates a data directory. Observations referencing unknown
/// events or cameras are format errors. With `load_masks`, mask files are
/// attached to their events as mask frames.
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

/// Writes platform.json, AOIs, ground truth, observations, masks and, when
/// present, the weekly stats and scheme of an in-memory dataset.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

} // namespace crowdcalib::ingest
