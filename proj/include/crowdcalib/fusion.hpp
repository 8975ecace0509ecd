#pragma once

#include "crowdcalib/domain.hpp"
#include "crowdcalib/features.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::fusion {

/// Missing-camera marker in feature vectors.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return v != v; }

/// One train arrival: per-camera values in sorted camera order.
struct FusionRow {
    EventId event_id;
    std::vector<double> features;
    double target = 0.0;
};

/// Per-camera value = mean over that camera's frames (upper median for
/// CLASS_LEVEL). Cameras without frames are missing; events with no camera
/// at all are skipped with a warning. `cameras` fixes the column order and is
/// sorted first.
std::vector<FusionRow> build_fusion_rows(const std::vector<ArrivalEvent>& events,
                                         const std::vector<features::FrameFeature>& frame_features,
                                         features::Method method, std::vector<CameraId> cameras);

struct GbdtParams {
    std::size_t n_trees = 200;
    double learning_rate = 0.1;
    std::size_t max_leaves = 15;
    std::size_t min_samples_leaf = 5;
    double leaf_l2 = 1.0;
    std::size_t max_bins = 256;

    void validate() const;
};

struct TreeNode {
    bool is_leaf = true;
    std::size_t feature = 0;
    double threshold = 0.0;   // value <= threshold goes left
    bool missing_left = true;
    std::size_t left = 0;     // child indices into Tree::nodes
    std::size_t right = 0;
    double value = 0.0;       // leaf output, learning rate already applied
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    double predict(std::span<const double> features) const;
    std::size_t leaf_count() const;
};

struct GbdtModel {
    std::string method;
    std::vector<CameraId> feature_names;
    double base_prediction = 0.0;
    double learning_rate = 0.1;
    GbdtParams params;
    std::vector<Tree> trees;
    /// Per-feature histogram cut points frozen at training time.
    std::vector<std::vector<double>> bin_cuts;

    std::size_t n_features() const noexcept { return feature_names.size(); }
};

/// Leaf output: learning_rate * residual_sum / (count + leaf_l2).
double leaf_output(double residual_sum, std::size_t count, double leaf_l2, double learning_rate);

/// Cut points for one feature column (missing values ignored). Distinct
/// values map to their own bin while they fit in max_bins; otherwise cuts are
/// linear-interpolation quantiles.
std::vector<double> histogram_cuts(std::span<const double> column, std::size_t max_bins);

/// Per-iteration training diagnostics.
struct TrainingTrace {
    /// Mean squared residual after the base prediction and after each tree.
    std::vector<double> mse;
};

/// Squared-loss boosting with leaf-wise growth over histogram splits.
/// Feature names label the columns; pass empty to use f0, f1, ...
GbdtModel train_gbdt(const std::vector<FusionRow>& rows, const GbdtParams& params,
                     std::vector<CameraId> feature_names = {}, std::string method = "unknown",
                     TrainingTrace* trace = nullptr);

double predict_gbdt(const GbdtModel& model, std::span<const double> features);
inline double predict_gbdt(const GbdtModel& model, const FusionRow& row) { return predict_gbdt(model, row.features); }

std::string write_gbdt_model(const GbdtModel& model);
GbdtModel read_gbdt_model(std::string_view text);

} // namespace crowdcalib::fusion
