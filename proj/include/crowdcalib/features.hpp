#pragma once

#include "crowdcalib/calibration.hpp"
#include "crowdcalib/domain.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::features {

enum class Method { DetCount, HeadCount, SegPixels, SegRatio, SegCalibrated, ClassLevel };

std::string_view to_string(Method method);
/// Accepts det_count, head_count, seg_pixels, seg_ratio, seg_calibrated,
/// class_level (case-insensitive).
Method parse_method(std::string_view text);
bool is_ordinal(Method method) noexcept;

/// One value per frame and method. For CLASS_LEVEL, `value` holds the level
/// as 0..3.
struct FrameFeature {
    CameraId camera;
    EventId event_id;
    int offset_s = 0;
    Method method = Method::DetCount;
    double value = 0.0;

    friend bool operator==(const FrameFeature&, const FrameFeature&) = default;
};

inline constexpr double kDefaultConfMin = 0.30;
inline constexpr int kPersonClass = 0;

std::size_t detection_count(const std::vector<DetectionBox>& boxes, double conf_min = kDefaultConfMin,
                             int person_class = kPersonClass);

std::size_t head_count(const std::vector<HeadPoint>& points, double conf_min = kDefaultConfMin);

struct SegFeatures {
    std::size_t pixels = 0;
    double ratio = 0.0;
};

/// pixels = |mask AND aoi|; ratio divides by the full image area, or by the
/// AOI area when `aoi_relative` is set (0 for an empty AOI).
SegFeatures seg_features(const GridMask& mask, const GridMask& aoi, bool aoi_relative = false);

/// Argmax with ties going to the higher level.
CrowdLevel class_level_from_logits(const ClassLogits& logits);

struct ExtractOptions {
    double box_conf_min = kDefaultConfMin;
    double point_conf_min = kDefaultConfMin;
    int person_class = kPersonClass;
    bool ratio_aoi_relative = false;
    bool clamp_nonnegative = false;
    /// Needed for SEG_CALIBRATED, keyed by camera.
    std::map<CameraId, WeightMap> weight_maps;
    /// Needed for SEG_PIXELS / SEG_RATIO; a camera without an AOI uses the
    /// full frame.
    std::map<CameraId, GridMask> aoi;
};

/// Extracts `method` from one frame. Returns false when the payload kind
/// does not carry that method (e.g. boxes for SEG_RATIO).
bool extract(const FrameObservation& obs, Method method, const ExtractOptions& options, FrameFeature& out);

/// Extracts `method` from every matching frame of every event.
std::vector<FrameFeature> extract_all(const std::vector<ArrivalEvent>& events, Method method,
                                      const ExtractOptions& options);

/// CSV: event_id,camera,offset_s,method,value
std::string write_features_csv(const std::vector<FrameFeature>& features);
std::vector<FrameFeature> read_features_csv(std::string_view text);

} // namespace crowdcalib::features
