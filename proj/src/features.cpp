#include "crowdcalib/features.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/text_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace crowdcalib::features {

std::string_view to_string(Method method)
{
    switch (method) {
    case Method::DetCount: return "det_count";
    case Method::HeadCount: return "head_count";
    case Method::SegPixels: return "seg_pixels";
    case Method::SegRatio: return "seg_ratio";
    case Method::SegCalibrated: return "seg_calibrated";
    case Method::ClassLevel: return "class_level";
    }
    return "?";
}

Method parse_method(std::string_view text)
{
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto m : {Method::DetCount, Method::HeadCount, Method::SegPixels, Method::SegRatio, Method::SegCalibrated,
                   Method::ClassLevel}) {
        if (lower == to_string(m)) return m;
    }
    throw ValidationError("unknown method '" + std::string(text) +
                          "' (expected det_count, head_count, seg_pixels, seg_ratio, seg_calibrated, class_level)");
}

bool is_ordinal(Method method) noexcept { return method == Method::ClassLevel; }

std::size_t detection_count(const std::vector<DetectionBox>& boxes, double conf_min, int person_class)
{
    return static_cast<std::size_t>(std::count_if(boxes.begin(), boxes.end(), [&](const DetectionBox& b) {
        return b.class_id == person_class && b.conf >= conf_min;
    }));
}

std::size_t head_count(const std::vector<HeadPoint>& points, double conf_min)
{
    return static_cast<std::size_t>(
        std::count_if(points.begin(), points.end(), [&](const HeadPoint& p) { return p.conf >= conf_min; }));
}

SegFeatures seg_features(const GridMask& mask, const GridMask& aoi, bool aoi_relative)
{
    if (!mask.same_shape(aoi)) {
        throw ValidationError("seg_features: mask and AOI dimensions differ");
    }
    SegFeatures out;
    out.pixels = (mask & aoi).popcount();
    const std::size_t denom = aoi_relative ? aoi.popcount() : mask.size();
    out.ratio = denom == 0 ? 0.0 : static_cast<double>(out.pixels) / static_cast<double>(denom);
    return out;
}

CrowdLevel class_level_from_logits(const ClassLogits& logits)
{
    std::size_t best = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) {
            throw NumericalError("class_level_from_logits: non-finite logit");
        }
        if (logits[i] >= logits[best]) best = i;
    }
    return static_cast<CrowdLevel>(best);
}

bool extract(const FrameObservation& obs, Method method, const ExtractOptions& options, FrameFeature& out)
{
    out.camera = obs.camera;
    out.event_id = obs.event_id;
    out.offset_s = obs.offset_s;
    out.method = method;
    switch (method) {
    case Method::DetCount:
        if (obs.kind() != PayloadKind::Boxes) return false;
        out.value = static_cast<double>(detection_count(std::get<std::vector<DetectionBox>>(obs.payload),
                                                        options.box_conf_min, options.person_class));
        return true;
    case Method::HeadCount:
        if (obs.kind() != PayloadKind::Points) return false;
        out.value = static_cast<double>(
            head_count(std::get<std::vector<HeadPoint>>(obs.payload), options.point_conf_min));
        return true;
    case Method::SegPixels:
    case Method::SegRatio: {
        if (obs.kind() != PayloadKind::Mask) return false;
        const auto& mask = std::get<GridMask>(obs.payload);
        const auto it = options.aoi.find(obs.camera);
        const GridMask full = it == options.aoi.end() ? GridMask(mask.rows(), mask.cols(), true) : GridMask{};
        const auto f = seg_features(mask, it == options.aoi.end() ? full : it->second, options.ratio_aoi_relative);
        out.value = method == Method::SegPixels ? static_cast<double>(f.pixels) : f.ratio;
        return true;
    }
    case Method::SegCalibrated: {
        if (obs.kind() != PayloadKind::Mask) return false;
        const auto it = options.weight_maps.find(obs.camera);
        if (it == options.weight_maps.end()) {
            throw ValidationError("seg_calibrated: no weight map for camera " + obs.camera);
        }
        const auto& w = it->second;
        const auto pooled = calibration::pool(std::get<GridMask>(obs.payload), w.p, w.q, w.pool_mode);
        out.value = calibration::estimate_occupancy(pooled, w, options.clamp_nonnegative);
        return true;
    }
    case Method::ClassLevel:
        if (obs.kind() != PayloadKind::Logits) return false;
        out.value = static_cast<double>(class_level_from_logits(std::get<ClassLogits>(obs.payload)));
        return true;
    }
    return false;
}

std::vector<FrameFeature> extract_all(const std::vector<ArrivalEvent>& events, Method method,
                                      const ExtractOptions& options)
{
    std::vector<FrameFeature> out;
    for (const auto& e : events) {
        for (const auto& f : e.frames) {
            FrameFeature feature;
            if (extract(f, method, options, feature)) out.push_back(std::move(feature));
        }
    }
    return out;
}

std::string write_features_csv(const std::vector<FrameFeature>& features)
{
    std::string out = "event_id,camera,offset_s,method,value\n";
    for (const auto& f : features) {
        text::check_identifier(f.event_id, "event_id");
        text::check_identifier(f.camera, "camera");
        out += f.event_id + "," + f.camera + "," + std::to_string(f.offset_s) + "," + std::string(to_string(f.method)) +
               "," + text::format_double(f.value) + "\n";
    }
    return out;
}

std::vector<FrameFeature> read_features_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "event_id,camera,offset_s,method,value") {
        throw FormatError("features row 1: expected header event_id,camera,offset_s,method,value", 1);
    }
    std::vector<FrameFeature> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 5) throw FormatError("features row " + std::to_string(row) + ": expected 5 fields", row);
        FrameFeature ff;
        ff.event_id = std::string(f[0]);
        ff.camera = std::string(f[1]);
        const auto offset = text::parse_int(f[2], "offset_s", row);
        if (!is_valid_offset(static_cast<int>(offset))) {
            throw FormatError("features row " + std::to_string(row) + ": offset_s must be -5, 0 or 5", row);
        }
        ff.offset_s = static_cast<int>(offset);
        try {
            ff.method = parse_method(f[3]);
        } catch (const ValidationError& e) {
            throw FormatError("features row " + std::to_string(row) + ": " + e.what(), row);
        }
        ff.value = text::parse_double(f[4], "value", row);
        if (!std::isfinite(ff.value)) throw FormatError("features row " + std::to_string(row) + ": non-finite value", row);
        out.push_back(std::move(ff));
    }
    return out;
}

} // namespace crowdcalib::features
