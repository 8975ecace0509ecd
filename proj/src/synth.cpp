#include "crowdcalib/synth.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/labeling.hpp"
#include "crowdcalib/parallel.hpp"
#include "crowdcalib/random.hpp"
#include "crowdcalib/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace crowdcalib::synth {

namespace fs = std::filesystem;
using nlohmann::json;

bool Trapezoid::contains(double x, double y) const noexcept
{
    if (!(y >= far_y && y <= near_y)) return false;
    const double t = near_y > far_y ? (y - far_y) / (near_y - far_y) : 0.0;
    const double x0 = far_x0 + t * (near_x0 - far_x0);
    const double x1 = far_x1 + t * (near_x1 - far_x1);
    return x >= x0 && x <= x1;
}

double Trapezoid::area() const noexcept
{
    return 0.5 * ((far_x1 - far_x0) + (near_x1 - near_x0)) * (near_y - far_y);
}

Trapezoid default_polygon(std::size_t rows, std::size_t cols)
{
    const double r = static_cast<double>(rows);
    const double c = static_cast<double>(cols);
    return Trapezoid{0.30 * r, 0.35 * c, 0.65 * c, 0.95 * r, 0.05 * c, 0.95 * c};
}

std::vector<CameraId> SynthConfig::camera_ids() const
{
    std::vector<CameraId> ids;
    for (std::size_t c = 0; c < n_cameras; ++c) ids.push_back("cam" + std::to_string(c));
    return ids;
}

void SynthConfig::validate() const
{
    text::check_identifier(platform, "platform");
    if (n_cameras < 1 || n_cameras > 64) throw ValidationError("synth: n_cameras must be in 1..64");
    if (rows < 8 || cols < 8) throw ValidationError("synth: image must be at least 8x8");
    const Trapezoid poly = effective_polygon();
    const double r = static_cast<double>(rows);
    const double c = static_cast<double>(cols);
    auto inside = [&](double x, double y) { return x >= 0.0 && x <= c - 1.0 && y >= 0.0 && y <= r - 1.0; };
    if (!(poly.far_y < poly.near_y) || !(poly.far_x0 < poly.far_x1) || !(poly.near_x0 < poly.near_x1) ||
        !inside(poly.far_x0, poly.far_y) || !inside(poly.far_x1, poly.far_y) || !inside(poly.near_x0, poly.near_y) ||
        !inside(poly.near_x1, poly.near_y)) {
        throw ValidationError("synth: platform polygon must be a proper trapezoid inside the image");
    }
    if (!(depth_scale > 0.0 && depth_scale <= 1.0)) throw ValidationError("synth: depth_scale must be in (0,1]");
    if (!(person_area >= 1.0) || !std::isfinite(person_area)) throw ValidationError("synth: person_area must be >= 1");
    if (occupancy_min < 0 || occupancy_max < occupancy_min) {
        throw ValidationError("synth: occupancy range must satisfy 0 <= min <= max");
    }
    if (n_events < 1) throw ValidationError("synth: n_events must be >= 1");
    if (!(miss_rate >= 0.0 && miss_rate < 1.0)) throw ValidationError("synth: miss_rate must be in [0,1)");
    if (!(overlap_factor >= 0.0) || !std::isfinite(overlap_factor)) {
        throw ValidationError("synth: overlap_factor must be >= 0");
    }
    if (!(jitter_px >= 0.0) || !std::isfinite(jitter_px)) throw ValidationError("synth: jitter_px must be >= 0");
    if (!(camera_dropout >= 0.0 && camera_dropout < 1.0)) {
        throw ValidationError("synth: camera_dropout must be in [0,1)");
    }
    if (!std::isfinite(logit_margin) || !(logit_noise >= 0.0)) throw ValidationError("synth: invalid logit settings");
    if (spacing_s < 1) throw ValidationError("synth: spacing_s must be >= 1");
    parse_rfc3339(start_time);
    const double mean_area = person_area * (1.0 + depth_scale) / 2.0;
    if (static_cast<double>(occupancy_max) * mean_area > poly.area()) {
        throw ValidationError("synth: platform polygon (" + text::format_double(poly.area()) +
                              " px) is too small for " + std::to_string(occupancy_max) + " people of mean area " +
                              text::format_double(mean_area) + " px");
    }
}

// ---------------------------------------------------------------------------

SynthConfig read_synth_config(std::string_view json_text)
{
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("synth config: ") + e.what(), e.byte);
    }
    if (!j.is_object()) throw FormatError("synth config: expected a JSON object", 0);
    SynthConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "platform") c.platform = v.get<std::string>();
            else if (key == "n_cameras") c.n_cameras = v.get<std::size_t>();
            else if (key == "rows") c.rows = v.get<std::size_t>();
            else if (key == "cols") c.cols = v.get<std::size_t>();
            else if (key == "polygon") {
                Trapezoid t;
                t.far_y = v.at("far_y").get<double>();
                t.far_x0 = v.at("far_x0").get<double>();
                t.far_x1 = v.at("far_x1").get<double>();
                t.near_y = v.at("near_y").get<double>();
                t.near_x0 = v.at("near_x0").get<double>();
                t.near_x1 = v.at("near_x1").get<double>();
                c.polygon = t;
            }
            else if (key == "depth_scale") c.depth_scale = v.get<double>();
            else if (key == "person_area") c.person_area = v.get<double>();
            else if (key == "occupancy_min") c.occupancy_min = v.get<int>();
            else if (key == "occupancy_max") c.occupancy_max = v.get<int>();
            else if (key == "n_events") c.n_events = v.get<std::size_t>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "miss_rate") c.miss_rate = v.get<double>();
            else if (key == "overlap_factor") c.overlap_factor = v.get<double>();
            else if (key == "jitter_px") c.jitter_px = v.get<double>();
            else if (key == "camera_dropout") c.camera_dropout = v.get<double>();
            else if (key == "logit_margin") c.logit_margin = v.get<double>();
            else if (key == "logit_noise") c.logit_noise = v.get<double>();
            else if (key == "emit_masks") c.emit_masks = v.get<bool>();
            else if (key == "emit_boxes") c.emit_boxes = v.get<bool>();
            else if (key == "emit_points") c.emit_points = v.get<bool>();
            else if (key == "emit_logits") c.emit_logits = v.get<bool>();
            else if (key == "start_time") c.start_time = v.get<std::string>();
            else if (key == "spacing_s") c.spacing_s = v.get<int>();
            else throw FormatError("synth config: unknown key '" + key + "'", 0);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("synth config: ") + e.what(), 0);
    }
    c.validate();
    return c;
}

std::string write_synth_config(const SynthConfig& c)
{
    const Trapezoid t = c.effective_polygon();
    json j = {
        {"platform", c.platform},
        {"n_cameras", c.n_cameras},
        {"rows", c.rows},
        {"cols", c.cols},
        {"polygon",
         {{"far_y", t.far_y}, {"far_x0", t.far_x0}, {"far_x1", t.far_x1},
          {"near_y", t.near_y}, {"near_x0", t.near_x0}, {"near_x1", t.near_x1}}},
        {"depth_scale", c.depth_scale},
        {"person_area", c.person_area},
        {"occupancy_min", c.occupancy_min},
        {"occupancy_max", c.occupancy_max},
        {"n_events", c.n_events},
        {"seed", c.seed},
        {"miss_rate", c.miss_rate},
        {"overlap_factor", c.overlap_factor},
        {"jitter_px", c.jitter_px},
        {"camera_dropout", c.camera_dropout},
        {"logit_margin", c.logit_margin},
        {"logit_noise", c.logit_noise},
        {"emit_masks", c.emit_masks},
        {"emit_boxes", c.emit_boxes},
        {"emit_points", c.emit_points},
        {"emit_logits", c.emit_logits},
        {"start_time", c.start_time},
        {"spacing_s", c.spacing_s},
    };
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

GridMask render_blobs(const std::vector<Blob>& blobs, std::size_t rows, std::size_t cols)
{
    GridMask mask(rows, cols);
    const double max_r = static_cast<double>(rows) - 1.0;
    const double max_c = static_cast<double>(cols) - 1.0;
    for (const auto& b : blobs) {
        if (!(b.a > 0.0 && b.b > 0.0)) continue;
        const double r0 = std::max(0.0, std::ceil(b.cy - b.b));
        const double r1 = std::min(max_r, std::floor(b.cy + b.b));
        for (double r = r0; r <= r1; r += 1.0) {
            const double dy = (r - b.cy) / b.b;
            const double half = b.a * std::sqrt(std::max(0.0, 1.0 - dy * dy));
            const double c0 = std::max(0.0, std::ceil(b.cx - half));
            const double c1 = std::min(max_c, std::floor(b.cx + half));
            if (c0 > c1) continue;
            mask.fill_span(static_cast<std::size_t>(r), static_cast<std::size_t>(c0), static_cast<std::size_t>(c1) + 1);
        }
    }
    return mask;
}

namespace {

constexpr std::uint64_t kOccupancyStream = 0x0CC0;
constexpr std::uint64_t kLayoutStream = 0;
constexpr std::uint64_t kFrameStream = 1;
constexpr std::uint64_t kDropoutStream = 10000;

} // namespace

SceneGenerator::SceneGenerator(SynthConfig config) : config_(std::move(config))
{
    config_.validate();
    polygon_ = config_.effective_polygon();
    aoi_ = GridMask(config_.rows, config_.cols);
    for (std::size_t r = 0; r < config_.rows; ++r) {
        for (std::size_t c = 0; c < config_.cols; ++c) {
            if (polygon_.contains(static_cast<double>(c), static_cast<double>(r))) aoi_.set(r, c, true);
        }
    }
    if (aoi_.popcount() == 0) throw ValidationError("synth: platform polygon covers no pixel");

    Rng rng(mix_seed(config_.seed, kOccupancyStream));
    const auto span = static_cast<std::uint64_t>(config_.occupancy_max - config_.occupancy_min) + 1;
    const Timestamp start = parse_rfc3339(config_.start_time);
    for (std::size_t i = 0; i < config_.n_events; ++i) {
        occupancy_.push_back(config_.occupancy_min + static_cast<int>(rng.below(span)));
        // up to 40% of the spacing as jitter keeps arrival times strictly increasing
        const auto jitter = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(config_.spacing_s) * 2 / 5 + 1));
        Timestamp t = start;
        t.utc_seconds += static_cast<std::int64_t>(i) * config_.spacing_s + jitter;
        times_.push_back(t);
    }

    std::vector<double> occ(occupancy_.begin(), occupancy_.end());
    const auto positive = std::count_if(occ.begin(), occ.end(), [](double v) { return v > 0.0; });
    if (positive >= 2) {
        scheme_ = labeling::fit_scheme(occ, config_.platform);
    } else if (config_.emit_logits) {
        warn("synth: fewer than 2 nonzero occupancies; no crowd-level scheme, logits are not generated");
    }
}

PlatformConfig SceneGenerator::platform_config() const
{
    PlatformConfig pc;
    pc.platform = config_.platform;
    pc.cameras = config_.camera_ids();
    for (const auto& c : pc.cameras) pc.aoi[c] = aoi_;
    return pc;
}

WeeklyBinStats SceneGenerator::bin_stats() const
{
    WeeklyBinStats s;
    s.platform = config_.platform;
    const double lo = config_.occupancy_min;
    const double hi = config_.occupancy_max;
    for (auto& e : s.entries) e = BinStat{(lo + hi) / 2.0, (hi - lo) / std::sqrt(12.0)};
    return s;
}

double SceneGenerator::depth(double y) const noexcept
{
    const double d = (polygon_.near_y - y) / (polygon_.near_y - polygon_.far_y);
    return std::clamp(d, 0.0, 1.0);
}

double SceneGenerator::area_scale(double y) const noexcept
{
    return 1.0 - (1.0 - config_.depth_scale) * depth(y);
}

Blob SceneGenerator::blob_at(double cx, double cy) const noexcept
{
    // upright ellipse twice as tall as wide
    const double area = config_.person_area * area_scale(cy);
    const double a = std::sqrt(area / (2.0 * std::numbers::pi));
    return Blob{cx, cy, a, 2.0 * a};
}

bool SceneGenerator::in_aoi(double x, double y) const noexcept
{
    const double rx = std::round(x);
    const double ry = std::round(y);
    if (!(rx >= 0.0 && ry >= 0.0 && rx < static_cast<double>(config_.cols) && ry < static_cast<double>(config_.rows))) {
        return false;
    }
    return aoi_.get(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
}

std::vector<Blob> SceneGenerator::event_blobs(std::size_t i) const
{
    Rng rng(mix_seed(mix_seed(config_.seed, i), kLayoutStream));
    const double x_lo = std::min(polygon_.far_x0, polygon_.near_x0);
    const double x_hi = std::max(polygon_.far_x1, polygon_.near_x1);
    std::vector<Blob> blobs;
    blobs.reserve(static_cast<std::size_t>(occupancy_.at(i)));
    for (int k = 0; k < occupancy_[i]; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 100000) throw ValidationError("synth: cannot place a person inside the platform polygon");
            const double x = rng.uniform(x_lo, x_hi);
            const double y = rng.uniform(polygon_.far_y, polygon_.near_y);
            if (in_aoi(x, y)) {
                blobs.push_back(blob_at(x, y));
                break;
            }
        }
    }
    return blobs;
}

ArrivalEvent SceneGenerator::event(std::size_t i) const
{
    ArrivalEvent e;
    e.platform = config_.platform;
    e.arrival_time = times_.at(i);
    e.occupancy = occupancy_[i];
    e.event_id = ingest::default_event_id(e.platform, e.arrival_time);

    const auto base = event_blobs(i);
    const auto cameras = config_.camera_ids();
    const std::uint64_t event_seed = mix_seed(config_.seed, i);
    for (std::size_t cam = 0; cam < cameras.size(); ++cam) {
        if (config_.camera_dropout > 0.0) {
            Rng drop(mix_seed(event_seed, kDropoutStream + cam));
            if (drop.uniform() < config_.camera_dropout) continue;
        }
        for (std::size_t f = 0; f < kFrameOffsets.size(); ++f) {
            Rng rng(mix_seed(event_seed, kFrameStream + cam * kFrameOffsets.size() + f));
            std::vector<Blob> blobs;
            blobs.reserve(base.size());
            for (const auto& b : base) {
                double x = b.cx + config_.jitter_px * rng.normal();
                double y = b.cy + config_.jitter_px * rng.normal();
                if (!in_aoi(x, y)) {
                    x = b.cx;
                    y = b.cy;
                }
                blobs.push_back(blob_at(x, y));
            }
            auto frame = [&](FramePayload payload) {
                e.frames.push_back(FrameObservation{cameras[cam], e.event_id, kFrameOffsets[f], std::move(payload)});
            };
            if (config_.emit_masks) frame(render_blobs(blobs, config_.rows, config_.cols));
            if (config_.emit_boxes) {
                std::vector<DetectionBox> boxes;
                for (std::size_t k = 0; k < blobs.size(); ++k) {
                    std::size_t overlaps = 0;
                    if (config_.overlap_factor > 0.0) {
                        for (std::size_t m = 0; m < blobs.size(); ++m) {
                            if (m != k && std::fabs(blobs[k].cx - blobs[m].cx) < blobs[k].a + blobs[m].a &&
                                std::fabs(blobs[k].cy - blobs[m].cy) < blobs[k].b + blobs[m].b) {
                                ++overlaps;
                            }
                        }
                    }
                    const double keep = (1.0 - config_.miss_rate) /
                                        (1.0 + config_.overlap_factor * static_cast<double>(overlaps));
                    const double u = rng.uniform();
                    const double conf = rng.uniform(0.35, 1.0);
                    if (u < keep) {
                        boxes.push_back(DetectionBox{blobs[k].cx, blobs[k].cy, 2.0 * blobs[k].a, 2.0 * blobs[k].b,
                                                     conf, 0});
                    }
                }
                frame(std::move(boxes));
            }
            if (config_.emit_points) {
                std::vector<HeadPoint> points;
                for (const auto& b : blobs) points.push_back(HeadPoint{b.cx, b.cy, rng.uniform(0.5, 1.0)});
                frame(std::move(points));
            }
            if (config_.emit_logits && scheme_) {
                const auto level = static_cast<std::size_t>(crowd_level(e.occupancy, *scheme_));
                ClassLogits logits{};
                for (std::size_t k = 0; k < logits.size(); ++k) {
                    logits[k] = (k == level ? config_.logit_margin : 0.0) + config_.logit_noise * rng.normal();
                }
                frame(logits);
            }
        }
    }
    return e;
}

// ---------------------------------------------------------------------------

ingest::Dataset generate(const SynthConfig& config)
{
    const SceneGenerator gen(config);
    ingest::Dataset ds;
    ds.platform_config = gen.platform_config();
    ds.scheme = gen.scheme();
    ds.bin_stats = gen.bin_stats();
    ds.events.resize(gen.event_count());
    parallel_chunks(gen.event_count(), worker_threads(), [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) ds.events[i] = gen.event(i);
    });
    return ds;
}

void write_synthetic_dataset(const SynthConfig& config, const fs::path& dir)
{
    const SceneGenerator gen(config);
    const ingest::DataLayout layout{dir};
    ingest::Dataset ds;
    ds.platform_config = gen.platform_config();
    ds.scheme = gen.scheme();
    ds.bin_stats = gen.bin_stats();
    for (std::size_t i = 0; i < gen.event_count(); ++i) {
        ArrivalEvent e = gen.event(i);
        std::vector<FrameObservation> kept;
        for (auto& f : e.frames) {
            if (f.kind() == PayloadKind::Mask) {
                text::write_file(layout.mask_file(f.camera, f.event_id, f.offset_s),
                                 ingest::write_mask_pgm(std::get<GridMask>(f.payload)));
            } else {
                kept.push_back(std::move(f));
            }
        }
        e.frames = std::move(kept);
        ds.events.push_back(std::move(e));
    }
    ingest::write_dataset(ds, dir);
}

} // namespace crowdcalib::synth
