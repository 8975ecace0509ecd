#include "crowdcalib/aggregation.hpp"
#include "crowdcalib/calibration.hpp"
#include "crowdcalib/error.hpp"
#include "crowdcalib/features.hpp"
#include "crowdcalib/fusion.hpp"
#include "crowdcalib/ingest.hpp"
#include "crowdcalib/labeling.hpp"
#include "crowdcalib/metrics.hpp"
#include "crowdcalib/synth.hpp"
#include "crowdcalib/text_io.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace crowdcalib;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path or_default(const std::string& given, const fs::path& fallback)
{
    return given.empty() ? fallback : fs::path(given);
}

std::map<EventId, const ArrivalEvent*> index_events(const ingest::Dataset& ds)
{
    std::map<EventId, const ArrivalEvent*> out;
    for (const auto& e : ds.events) out[e.event_id] = &e;
    return out;
}

std::optional<labeling::SplitAssignment> read_split(const std::string& path)
{
    if (path.empty()) return std::nullopt;
    return labeling::read_split_csv(text::read_file(path));
}

bool in_subset(const std::optional<labeling::SplitAssignment>& split, bool train, const EventId& id)
{
    if (!split) return true;
    return train ? split->train_event_ids.count(id) > 0 : split->test_event_ids.count(id) > 0;
}

std::string first_line(const std::string& content)
{
    const auto lines = text::lines(content);
    return lines.empty() ? std::string() : std::string(lines[0]);
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& dir)
{
    const auto ds = ingest::load_dataset(dir, {.load_masks = true});
    std::map<PayloadKind, std::size_t> kinds;
    for (const auto& e : ds.events) {
        for (const auto& f : e.frames) ++kinds[f.kind()];
    }
    std::cout << "platform " << ds.platform_config.platform << "\n"
              << "cameras " << ds.platform_config.cameras.size() << "\n"
              << "events " << ds.events.size() << "\n"
              << "mask_frames " << kinds[PayloadKind::Mask] << "\n"
              << "box_frames " << kinds[PayloadKind::Boxes] << "\n"
              << "point_frames " << kinds[PayloadKind::Points] << "\n"
              << "logit_frames " << kinds[PayloadKind::Logits] << "\n"
              << "weekly_stats " << (ds.bin_stats ? "yes" : "no") << "\n"
              << "scheme " << (ds.scheme ? "yes" : "no") << "\n";
    return kExitOk;
}

int cmd_fit_scheme(const std::string& dir, const std::string& out)
{
    const auto ds = ingest::load_dataset(dir);
    std::vector<double> occ;
    for (const auto& e : ds.events) occ.push_back(e.occupancy);
    const auto scheme = labeling::fit_scheme(occ, ds.platform_config.platform);
    text::write_file(or_default(out, ingest::DataLayout{dir}.scheme_file()), labeling::write_scheme_csv({scheme}));
    std::cout << "t50 " << text::format_double(scheme.t50) << " t75 " << text::format_double(scheme.t75) << " t98 "
              << text::format_double(scheme.t98) << "\n";
    return kExitOk;
}

int cmd_label(const std::string& dir, const std::string& scheme_path, const std::string& out)
{
    const auto ds = ingest::load_dataset(dir);
    const auto schemes =
        labeling::read_scheme_csv(text::read_file(or_default(scheme_path, ingest::DataLayout{dir}.scheme_file())));
    const CrowdLevelScheme* scheme = nullptr;
    for (const auto& s : schemes) {
        if (s.platform == ds.platform_config.platform) scheme = &s;
    }
    if (!scheme) throw FormatError("no scheme for platform " + ds.platform_config.platform);
    const auto labels = labeling::label_events(ds.events, *scheme);
    text::write_file(or_default(out, fs::path(dir) / "labels.csv"), labeling::write_labels_csv(labels));
    return kExitOk;
}

int cmd_split(const std::string& dir, const std::string& labels_path, double ratio, std::uint64_t seed,
              const std::string& out)
{
    const auto labels = labeling::read_labels_csv(text::read_file(or_default(labels_path, fs::path(dir) / "labels.csv")));
    const auto split = labeling::stratified_split(labels, ratio, seed);
    text::write_file(or_default(out, fs::path(dir) / "split.csv"), labeling::write_split_csv(split));
    std::cout << "train " << split.train_event_ids.size() << " test " << split.test_event_ids.size() << "\n";
    return kExitOk;
}

struct CalibrateArgs {
    std::string dir, camera, split, out, estimates_out;
    std::size_t p = 8, q = 8;
    double lambda = calibration::kDefaultLambda;
    std::string pool = "max";
    double tol = calibration::kDefaultTolerance;
    std::size_t max_iter = 0;
    bool strict = false;
    bool clamp = false;
};

int cmd_calibrate(const CalibrateArgs& a)
{
    const auto ds = ingest::load_dataset(a.dir);
    if (!ds.platform_config.has_camera(a.camera)) throw ValidationError("unknown camera " + a.camera);
    const auto events = index_events(ds);
    const auto split = read_split(a.split);
    const auto mode = parse_pool_mode(a.pool);
    const ingest::DataLayout layout{a.dir};
    const auto aoi_it = ds.platform_config.aoi.find(a.camera);
    const GridMask* aoi = aoi_it == ds.platform_config.aoi.end() ? nullptr : &aoi_it->second;

    std::vector<ingest::MaskRef> refs;
    for (auto& r : ingest::list_masks(layout)) {
        if (r.camera == a.camera) refs.push_back(std::move(r));
    }
    if (refs.empty()) throw ValidationError("no masks for camera " + a.camera);

    auto load_pooled = [&](const ingest::MaskRef& ref) {
        GridMask mask = ingest::read_mask_pgm(text::read_file(ref.path));
        if (aoi) mask &= *aoi;
        return calibration::pool(mask, a.p, a.q, mode);
    };

    std::optional<calibration::CalibrationProblem> problem;
    for (const auto& ref : refs) {
        const auto ev = events.find(ref.event_id);
        if (ev == events.end()) throw FormatError(ref.path.string() + ": unknown event " + ref.event_id);
        if (!in_subset(split, true, ref.event_id)) continue;
        auto pooled = load_pooled(ref);
        if (!problem) problem.emplace(a.camera, pooled.prows, pooled.pcols, a.lambda, mode, a.p, a.q);
        problem->add_sample(pooled, ev->second->occupancy);
    }
    if (!problem) throw ValidationError("no training masks for camera " + a.camera);

    calibration::SolverOptions opts;
    opts.tol = a.tol;
    opts.max_iter = a.max_iter;
    auto [weights, report] = calibration::fit_weight_map(*problem, opts);
    std::cout << "samples " << problem->sample_count() << " cells " << problem->dimension() << " iterations "
              << report.iterations << " residual " << text::format_double(report.final_residual_norm) << " converged "
              << (report.converged ? "yes" : "no") << "\n";
    text::write_file(or_default(a.out, fs::path(a.dir) / ("weights_" + a.camera + ".wmap")),
                     calibration::write_weight_map(weights));

    if (!a.estimates_out.empty()) {
        std::map<EventId, double> estimates;
        for (const auto& ref : refs) {
            const double v = calibration::estimate_occupancy(load_pooled(ref), weights, a.clamp);
            auto [it, inserted] = estimates.emplace(ref.event_id, v);
            if (!inserted) it->second = std::max(it->second, v);
        }
        text::write_file(a.estimates_out, aggregation::write_estimates_csv(estimates));
    }
    if (!report.converged) {
        warn("calibrate: solver did not converge within " + std::to_string(report.iterations) + " iterations");
        if (a.strict) return kExitNumerical;
    }
    return kExitOk;
}

int cmd_features(const std::string& dir, const std::string& method_name, const std::vector<std::string>& wmaps,
                 double conf_min, bool aoi_relative, bool clamp, const std::string& out)
{
    const auto method = features::parse_method(method_name);
    const auto ds = ingest::load_dataset(dir);
    features::ExtractOptions opts;
    opts.box_conf_min = conf_min;
    opts.point_conf_min = conf_min;
    opts.ratio_aoi_relative = aoi_relative;
    opts.clamp_nonnegative = clamp;
    opts.aoi = ds.platform_config.aoi;
    for (const auto& path : wmaps) {
        auto w = calibration::read_weight_map(text::read_file(path));
        opts.weight_maps[w.camera] = std::move(w);
    }
    if (method == features::Method::SegCalibrated && opts.weight_maps.empty()) {
        throw UsageError("seg_calibrated needs at least one --wmap");
    }

    std::vector<features::FrameFeature> result;
    const bool from_masks = method == features::Method::SegPixels || method == features::Method::SegRatio ||
                            method == features::Method::SegCalibrated;
    if (from_masks) {
        // stream masks from disk instead of holding them all
        const auto events = index_events(ds);
        for (const auto& ref : ingest::list_masks(ingest::DataLayout{dir})) {
            if (!events.count(ref.event_id)) throw FormatError(ref.path.string() + ": unknown event " + ref.event_id);
            if (method == features::Method::SegCalibrated && !opts.weight_maps.count(ref.camera)) continue;
            FrameObservation obs{ref.camera, ref.event_id, ref.offset_s,
                                 ingest::read_mask_pgm(text::read_file(ref.path))};
            const auto aoi = ds.platform_config.aoi.find(ref.camera);
            if (aoi != ds.platform_config.aoi.end()) obs = ingest::apply_aoi(obs, aoi->second);
            features::FrameFeature f;
            if (features::extract(obs, method, opts, f)) result.push_back(std::move(f));
        }
    } else {
        result = features::extract_all(ds.events, method, opts);
    }
    if (result.empty()) warn("features: no frames carry " + std::string(features::to_string(method)));
    text::write_file(or_default(out, fs::path(dir) / ("features_" + std::string(features::to_string(method)) + ".csv")),
                     features::write_features_csv(result));
    return kExitOk;
}

int cmd_aggregate(const std::string& dir, const std::string& level, const std::string& in, const std::string& camera,
                  const std::string& out)
{
    const std::string content = text::read_file(in);
    const std::string header = first_line(content);
    if (level == "event") {
        if (header != "event_id,camera,offset_s,method,value") {
            throw FormatError(in + ": event aggregation expects a frame features file");
        }
        const auto events = aggregation::frames_to_events(features::read_features_csv(content));
        text::write_file(out, aggregation::write_event_features_csv(events));
        return kExitOk;
    }
    if (level != "bin") throw UsageError("--level must be event or bin");
    const auto ds = ingest::load_dataset(dir);
    std::map<EventId, double> values;
    features::Method method = features::Method::DetCount;
    if (header == "event_id,camera,method,value") {
        const auto ev = aggregation::read_event_features_csv(content);
        std::set<CameraId> cams;
        for (const auto& e : ev) {
            if (!camera.empty() && e.camera != camera) continue;
            cams.insert(e.camera);
            method = e.method;
            values[e.event_id] = e.value;
        }
        if (cams.size() > 1) throw UsageError("event features cover several cameras; choose one with --camera");
    } else if (header == "event_id,value") {
        values = aggregation::read_estimates_csv(content);
    } else {
        throw FormatError(in + ": bin aggregation expects event features or estimates");
    }
    text::write_file(out, aggregation::write_bins_csv(aggregation::events_to_bins(ds.events, values, method)));
    return kExitOk;
}

struct FuseArgs {
    std::string dir, features, split, model, out, method;
    fusion::GbdtParams params;
};

std::pair<features::Method, std::vector<fusion::FusionRow>> fusion_rows(const FuseArgs& a, const ingest::Dataset& ds)
{
    const auto frames = features::read_features_csv(text::read_file(a.features));
    if (frames.empty() && a.method.empty()) throw ValidationError(a.features + ": no features");
    const auto method = a.method.empty() ? frames.front().method : features::parse_method(a.method);
    return {method, fusion::build_fusion_rows(ds.events, frames, method, ds.platform_config.cameras)};
}

int cmd_fuse_train(const FuseArgs& a)
{
    const auto ds = ingest::load_dataset(a.dir);
    auto [method, rows] = fusion_rows(a, ds);
    const auto split = read_split(a.split);
    std::vector<fusion::FusionRow> train;
    for (auto& r : rows) {
        if (in_subset(split, true, r.event_id)) train.push_back(std::move(r));
    }
    auto cameras = ds.platform_config.cameras;
    std::sort(cameras.begin(), cameras.end());
    const auto model = fusion::train_gbdt(train, a.params, cameras, std::string(features::to_string(method)));
    text::write_file(a.model, fusion::write_gbdt_model(model));
    std::cout << "rows " << train.size() << " trees " << model.trees.size() << "\n";
    return kExitOk;
}

int cmd_fuse_predict(const FuseArgs& a)
{
    const auto ds = ingest::load_dataset(a.dir);
    const auto model = fusion::read_gbdt_model(text::read_file(a.model));
    FuseArgs b = a;
    if (b.method.empty()) b.method = model.method;
    auto [method, rows] = fusion_rows(b, ds);
    auto cameras = ds.platform_config.cameras;
    std::sort(cameras.begin(), cameras.end());
    if (cameras != model.feature_names) throw ValidationError("model cameras do not match the platform cameras");
    std::map<EventId, double> estimates;
    for (const auto& r : rows) estimates[r.event_id] = fusion::predict_gbdt(model, r);
    text::write_file(a.out, aggregation::write_estimates_csv(estimates));
    return kExitOk;
}

struct EvaluateArgs {
    std::string dir, level, in, stats, out, plot_data, split, method, camera;
};

int cmd_evaluate(const EvaluateArgs& a)
{
    const auto level = metrics::parse_level(a.level);
    if (level == metrics::Level::Bin && a.stats.empty()) {
        throw UsageError("--level bin needs --stats (wMAE is undefined without weekly bin statistics)");
    }
    const auto ds = ingest::load_dataset(a.dir);
    const auto events = index_events(ds);
    const auto split = read_split(a.split);
    std::optional<WeeklyBinStats> stats;
    if (!a.stats.empty()) {
        const auto all = ingest::read_weekly_stats_csv(text::read_file(a.stats));
        const auto it = all.find(ds.platform_config.platform);
        if (it == all.end()) throw FormatError(a.stats + ": no rows for platform " + ds.platform_config.platform);
        stats = it->second;
    }

    const std::string content = text::read_file(a.in);
    const std::string header = first_line(content);
    std::string method = a.method;
    std::vector<metrics::EvalPair> pairs;
    auto event_pair = [&](const std::string& key, const EventId& id, double value) {
        const auto ev = events.find(id);
        if (ev == events.end()) throw FormatError(a.in + ": unknown event " + id);
        if (!in_subset(split, false, id)) return;
        pairs.push_back({key, ev->second->occupancy, value, bin_index(ev->second->arrival_time)});
    };

    if (level == metrics::Level::Image) {
        if (header != "event_id,camera,offset_s,method,value") {
            throw FormatError(a.in + ": image level expects a frame features file");
        }
        for (const auto& f : features::read_features_csv(content)) {
            if (!a.camera.empty() && f.camera != a.camera) continue;
            if (method.empty()) method = features::to_string(f.method);
            event_pair(f.event_id + "/" + f.camera + "/" + offset_token(f.offset_s), f.event_id, f.value);
        }
    } else {
        std::map<EventId, double> values;
        if (header == "event_id,value") {
            values = aggregation::read_estimates_csv(content);
            if (method.empty()) method = "estimate";
        } else if (header == "event_id,camera,method,value") {
            std::set<CameraId> cams;
            for (const auto& e : aggregation::read_event_features_csv(content)) {
                if (!a.camera.empty() && e.camera != a.camera) continue;
                cams.insert(e.camera);
                if (method.empty()) method = features::to_string(e.method);
                values[e.event_id] = e.value;
            }
            if (cams.size() > 1) throw UsageError("event features cover several cameras; choose one with --camera");
        } else if (level == metrics::Level::Bin && header == "platform,date,bin_of_day,value,n_events") {
            if (method.empty()) method = "bins";
        } else {
            throw FormatError(a.in + ": unrecognized input header '" + header + "'");
        }

        if (level == metrics::Level::Event) {
            for (const auto& [id, v] : values) event_pair(id, id, v);
        } else {
            std::vector<aggregation::BinEntry> estimated;
            std::vector<ArrivalEvent> subset;
            for (const auto& e : ds.events) {
                if (in_subset(split, false, e.event_id)) subset.push_back(e);
            }
            if (header == "platform,date,bin_of_day,value,n_events") {
                estimated = aggregation::read_bins_csv(content);
            } else {
                std::map<EventId, double> kept;
                for (const auto& [id, v] : values) {
                    if (in_subset(split, false, id)) kept.emplace(id, v);
                }
                estimated = aggregation::events_to_bins(subset, kept, features::Method::DetCount);
            }
            std::map<aggregation::BinKey, double> truth;
            for (const auto& b : aggregation::ground_truth_bins(subset)) truth[b.key] = b.value;
            for (const auto& b : estimated) {
                const auto t = truth.find(b.key);
                if (t == truth.end()) continue;
                pairs.push_back({b.key.date + "/" + std::to_string(b.key.bin_of_day), t->second, b.value,
                                 aggregation::weekly_bin(b.key)});
            }
        }
    }
    if (pairs.empty()) throw ValidationError("evaluate: no estimate/target pairs to score");
    if (method.empty()) method = "estimate";
    const auto rows = metrics::evaluate(level, method, pairs, stats ? &*stats : nullptr);
    const std::string report = metrics::write_report_csv(rows);
    if (a.out.empty()) {
        std::cout << report;
    } else {
        text::write_file(a.out, report);
    }
    if (!a.plot_data.empty()) text::write_file(a.plot_data, metrics::write_plot_data_csv(pairs));
    return kExitOk;
}

int cmd_synth(const std::string& config_path, const std::string& out)
{
    synth::SynthConfig config;
    if (!config_path.empty()) config = synth::read_synth_config(text::read_file(config_path));
    config.validate();
    synth::write_synthetic_dataset(config, out);
    text::write_file(fs::path(out) / "synth_config.json", synth::write_synth_config(config));
    std::cout << "events " << config.n_events << " cameras " << config.n_cameras << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"crowdcalib: platform crowding estimation from CCTV-derived features"};
    app.require_subcommand(1);
    std::function<int()> run;

    std::string data_dir;
    auto add_data = [&](CLI::App* sub) { sub->add_option("--data", data_dir, "data directory")->required(); };

    auto* validate = app.add_subcommand("validate", "load and check a data directory");
    validate->add_option("dir", data_dir, "data directory")->required();
    validate->callback([&] { run = [&] { return cmd_validate(data_dir); }; });

    std::string out;
    auto* fit = app.add_subcommand("fit-scheme", "fit crowd-level thresholds from ground truth");
    add_data(fit);
    fit->add_option("--out", out, "scheme CSV (default <data>/scheme.csv)");
    fit->callback([&] { run = [&] { return cmd_fit_scheme(data_dir, out); }; });

    std::string scheme_path;
    auto* label = app.add_subcommand("label", "assign crowd levels to events");
    add_data(label);
    label->add_option("--scheme", scheme_path, "scheme CSV (default <data>/scheme.csv)");
    label->add_option("--out", out, "labels CSV (default <data>/labels.csv)");
    label->callback([&] { run = [&] { return cmd_label(data_dir, scheme_path, out); }; });

    std::string labels_path;
    double ratio = 0.9;
    std::uint64_t seed = 0;
    auto* split = app.add_subcommand("split", "stratified train/test split");
    add_data(split);
    split->add_option("--labels", labels_path, "labels CSV (default <data>/labels.csv)");
    split->add_option("--ratio", ratio, "train share")->capture_default_str();
    split->add_option("--seed", seed, "random seed")->capture_default_str();
    split->add_option("--out", out, "split CSV (default <data>/split.csv)");
    split->callback([&] { run = [&] { return cmd_split(data_dir, labels_path, ratio, seed, out); }; });

    CalibrateArgs cal;
    auto* calibrate = app.add_subcommand("calibrate", "learn a per-camera weight map");
    add_data(calibrate);
    calibrate->add_option("--camera", cal.camera, "camera id")->required();
    calibrate->add_option("--p", cal.p, "block rows")->capture_default_str()->check(CLI::PositiveNumber);
    calibrate->add_option("--q", cal.q, "block cols")->capture_default_str()->check(CLI::PositiveNumber);
    calibrate->add_option("--lambda", cal.lambda, "ridge strength")->capture_default_str();
    calibrate->add_option("--pool", cal.pool, "max or mean")->capture_default_str()->check(CLI::IsMember({"max", "mean"}));
    calibrate->add_option("--split", cal.split, "split CSV; fit on its train events");
    calibrate->add_option("--out", cal.out, "weight map (default <data>/weights_<camera>.wmap)");
    calibrate->add_option("--estimates-out", cal.estimates_out, "per-event estimates CSV (max over frames)");
    calibrate->add_option("--tol", cal.tol, "relative residual tolerance")->capture_default_str();
    calibrate->add_option("--max-iter", cal.max_iter, "iteration cap (0 = 10 x cells)")->capture_default_str();
    calibrate->add_flag("--strict", cal.strict, "exit 3 when the solver does not converge");
    calibrate->add_flag("--clamp-nonnegative", cal.clamp, "floor estimates at zero");
    calibrate->callback([&] {
        cal.dir = data_dir;
        run = [&] { return cmd_calibrate(cal); };
    });

    std::string method;
    std::vector<std::string> wmaps;
    double conf_min = features::kDefaultConfMin;
    bool aoi_relative = false;
    bool clamp = false;
    auto* feats = app.add_subcommand("features", "per-frame features for one method");
    add_data(feats);
    feats->add_option("--method", method, "det_count, head_count, seg_pixels, seg_ratio, seg_calibrated, class_level")
        ->required();
    feats->add_option("--wmap", wmaps, "weight map file (seg_calibrated), repeatable");
    feats->add_option("--conf-min", conf_min, "confidence threshold for boxes and points")->capture_default_str();
    feats->add_flag("--aoi-relative", aoi_relative, "seg_ratio relative to the AOI area");
    feats->add_flag("--clamp-nonnegative", clamp, "floor calibrated estimates at zero");
    feats->add_option("--out", out, "features CSV (default <data>/features_<method>.csv)");
    feats->callback([&] { run = [&] { return cmd_features(data_dir, method, wmaps, conf_min, aoi_relative, clamp, out); }; });

    std::string level, in, camera;
    auto* agg = app.add_subcommand("aggregate", "roll frames up to events, or events up to 15-minute bins");
    add_data(agg);
    agg->add_option("--level", level, "event or bin")->required()->check(CLI::IsMember({"event", "bin"}));
    agg->add_option("--in", in, "input CSV")->required();
    agg->add_option("--camera", camera, "camera to use when the input covers several");
    agg->add_option("--out", out, "output CSV")->required();
    agg->callback([&] { run = [&] { return cmd_aggregate(data_dir, level, in, camera, out); }; });

    FuseArgs fuse;
    auto add_fuse_common = [&](CLI::App* sub) {
        add_data(sub);
        sub->add_option("--features", fuse.features, "frame features CSV")->required();
        sub->add_option("--method", fuse.method, "method (default: from the input)");
        sub->add_option("--model", fuse.model, "model file")->required();
    };
    auto* fuse_train = app.add_subcommand("fuse-train", "train the multi-camera boosted-trees model");
    add_fuse_common(fuse_train);
    fuse_train->add_option("--split", fuse.split, "split CSV; train on its train events");
    fuse_train->add_option("--n-trees", fuse.params.n_trees)->capture_default_str();
    fuse_train->add_option("--learning-rate", fuse.params.learning_rate)->capture_default_str();
    fuse_train->add_option("--max-leaves", fuse.params.max_leaves)->capture_default_str();
    fuse_train->add_option("--min-samples-leaf", fuse.params.min_samples_leaf)->capture_default_str();
    fuse_train->add_option("--leaf-l2", fuse.params.leaf_l2)->capture_default_str();
    fuse_train->add_option("--max-bins", fuse.params.max_bins)->capture_default_str();
    fuse_train->callback([&] {
        fuse.dir = data_dir;
        run = [&] { return cmd_fuse_train(fuse); };
    });
    auto* fuse_predict = app.add_subcommand("fuse-predict", "platform-level estimates from a trained model");
    add_fuse_common(fuse_predict);
    fuse_predict->add_option("--out", fuse.out, "estimates CSV")->required();
    fuse_predict->callback([&] {
        fuse.dir = data_dir;
        run = [&] { return cmd_fuse_predict(fuse); };
    });

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "score estimates against ground truth");
    add_data(evaluate);
    evaluate->add_option("--level", ev.level, "image, event or bin")->required()->check(
        CLI::IsMember({"image", "event", "bin"}));
    evaluate->add_option("--in", ev.in, "frame features, event features, estimates or bins CSV")->required();
    evaluate->add_option("--stats", ev.stats, "weekly bin statistics CSV (enables wMAE; required for bin)");
    evaluate->add_option("--split", ev.split, "split CSV; score its test events only");
    evaluate->add_option("--method", ev.method, "method label in the report");
    evaluate->add_option("--camera", ev.camera, "camera to score when the input covers several");
    evaluate->add_option("--out", ev.out, "report CSV (default: standard output)");
    evaluate->add_option("--plot-data", ev.plot_data, "y,y_hat CSV for plotting");
    evaluate->callback([&] {
        ev.dir = data_dir;
        run = [&] { return cmd_evaluate(ev); };
    });

    std::string config_path;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic data directory");
    synth_cmd->add_option("--config", config_path, "JSON config (defaults when omitted)");
    synth_cmd->add_option("--out", out, "output directory")->required();
    synth_cmd->callback([&] { run = [&] { return cmd_synth(config_path, out); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        return run();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
