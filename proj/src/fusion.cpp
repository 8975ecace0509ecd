#include "crowdcalib/fusion.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/stats.hpp"
#include "crowdcalib/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

namespace crowdcalib::fusion {

std::vector<FusionRow> build_fusion_rows(const std::vector<ArrivalEvent>& events,
                                         const std::vector<features::FrameFeature>& frame_features,
                                         features::Method method, std::vector<CameraId> cameras)
{
    std::sort(cameras.begin(), cameras.end());
    cameras.erase(std::unique(cameras.begin(), cameras.end()), cameras.end());
    std::map<CameraId, std::size_t> column;
    for (std::size_t i = 0; i < cameras.size(); ++i) column[cameras[i]] = i;

    std::map<EventId, std::vector<std::vector<double>>> values;
    for (const auto& f : frame_features) {
        if (f.method != method) continue;
        const auto col = column.find(f.camera);
        if (col == column.end()) {
            throw ValidationError("build_fusion_rows: feature for unknown camera " + f.camera);
        }
        auto& per_camera = values[f.event_id];
        per_camera.resize(cameras.size());
        per_camera[col->second].push_back(f.value);
    }

    std::vector<FusionRow> rows;
    std::size_t skipped = 0;
    for (const auto& e : events) {
        const auto it = values.find(e.event_id);
        if (it == values.end()) {
            ++skipped;
            continue;
        }
        FusionRow row{e.event_id, std::vector<double>(cameras.size(), kMissing), e.occupancy};
        for (std::size_t c = 0; c < cameras.size(); ++c) {
            const auto& v = it->second[c];
            if (v.empty()) continue;
            if (features::is_ordinal(method)) {
                std::vector<int> levels;
                for (double x : v) levels.push_back(static_cast<int>(std::lround(x)));
                row.features[c] = stats::upper_median(std::move(levels));
            } else {
                row.features[c] = stats::mean(v);
            }
        }
        rows.push_back(std::move(row));
    }
    if (skipped > 0) {
        warn("build_fusion_rows: " + std::to_string(skipped) + " events have no " +
             std::string(features::to_string(method)) + " features from any camera and were skipped");
    }
    return rows;
}

void GbdtParams::validate() const
{
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw ValidationError("GBDT: learning_rate must be in (0,1]");
    }
    if (max_leaves < 2) throw ValidationError("GBDT: max_leaves must be >= 2");
    if (min_samples_leaf < 1) throw ValidationError("GBDT: min_samples_leaf must be >= 1");
    if (!(leaf_l2 >= 0.0) || !std::isfinite(leaf_l2)) throw ValidationError("GBDT: leaf_l2 must be >= 0");
    if (max_bins < 2 || max_bins > 65535) throw ValidationError("GBDT: max_bins must be in 2..65535");
}

double Tree::predict(std::span<const double> features) const
{
    std::size_t i = 0;
    while (!nodes[i].is_leaf) {
        const auto& n = nodes[i];
        const double v = features[n.feature];
        const bool left = is_missing(v) ? n.missing_left : v <= n.threshold;
        i = left ? n.left : n.right;
    }
    return nodes[i].value;
}

std::size_t Tree::leaf_count() const
{
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf; }));
}

double leaf_output(double residual_sum, std::size_t count, double leaf_l2, double learning_rate)
{
    const double denom = static_cast<double>(count) + leaf_l2;
    return denom > 0.0 ? learning_rate * residual_sum / denom : 0.0;
}

std::vector<double> histogram_cuts(std::span<const double> column, std::size_t max_bins)
{
    std::vector<double> present;
    for (double v : column) {
        if (!is_missing(v)) present.push_back(v);
    }
    if (present.empty()) return {};
    std::sort(present.begin(), present.end());
    std::vector<double> distinct = present;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> cuts;
    if (distinct.size() <= max_bins) {
        // every distinct value but the largest closes its own bin
        cuts.assign(distinct.begin(), distinct.end() - 1);
    } else {
        for (std::size_t i = 1; i < max_bins; ++i) {
            cuts.push_back(stats::percentile_sorted(present, static_cast<double>(i) / static_cast<double>(max_bins)));
        }
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        while (!cuts.empty() && cuts.back() >= distinct.back()) cuts.pop_back();
    }
    return cuts;
}

namespace {

constexpr std::uint16_t kMissingBin = 0xFFFF;

struct SplitCandidate {
    double gain = 0.0;
    bool valid = false;
    std::size_t feature = 0;
    std::size_t bin = 0;
    bool missing_left = true;
};

struct GrowingLeaf {
    std::size_t node = 0;
    std::vector<std::size_t> rows;
    SplitCandidate best;
};

class TreeGrower {
public:
    TreeGrower(const std::vector<std::vector<std::uint16_t>>& bins, const std::vector<std::vector<double>>& cuts,
               const GbdtParams& params)
        : bins_(bins), cuts_(cuts), params_(params)
    {
    }

    Tree grow(const std::vector<double>& residuals, std::size_t n_rows)
    {
        Tree tree;
        tree.nodes.emplace_back();
        std::vector<GrowingLeaf> leaves(1);
        leaves[0].node = 0;
        leaves[0].rows.resize(n_rows);
        for (std::size_t i = 0; i < n_rows; ++i) leaves[0].rows[i] = i;
        leaves[0].best = best_split(leaves[0].rows, residuals);

        while (leaves.size() < params_.max_leaves) {
            std::size_t pick = leaves.size();
            for (std::size_t l = 0; l < leaves.size(); ++l) {
                if (leaves[l].best.valid && (pick == leaves.size() || leaves[l].best.gain > leaves[pick].best.gain)) {
                    pick = l;
                }
            }
            if (pick == leaves.size()) break;

            GrowingLeaf leaf = std::move(leaves[pick]);
            leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(pick));
            const auto& s = leaf.best;
            GrowingLeaf left, right;
            for (std::size_t i : leaf.rows) {
                const std::uint16_t b = bins_[s.feature][i];
                const bool go_left = b == kMissingBin ? s.missing_left : b <= s.bin;
                (go_left ? left : right).rows.push_back(i);
            }
            left.node = tree.nodes.size();
            right.node = left.node + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            auto& parent = tree.nodes[leaf.node];
            parent.is_leaf = false;
            parent.feature = s.feature;
            parent.threshold = cuts_[s.feature][s.bin];
            parent.missing_left = s.missing_left;
            parent.left = left.node;
            parent.right = right.node;
            left.best = best_split(left.rows, residuals);
            right.best = best_split(right.rows, residuals);
            leaves.push_back(std::move(left));
            leaves.push_back(std::move(right));
        }
        for (const auto& leaf : leaves) {
            double sum = 0.0;
            for (std::size_t i : leaf.rows) sum += residuals[i];
            tree.nodes[leaf.node].value = leaf_output(sum, leaf.rows.size(), params_.leaf_l2, params_.learning_rate);
        }
        return tree;
    }

private:
    double score(double g, double n) const { return g * g / (n + params_.leaf_l2); }

    SplitCandidate best_split(const std::vector<std::size_t>& rows, const std::vector<double>& residuals)
    {
        SplitCandidate best;
        const std::size_t min_leaf = params_.min_samples_leaf;
        if (rows.size() < 2 * min_leaf) return best;

        double total = 0.0;
        double sse = 0.0;
        for (std::size_t i : rows) {
            total += residuals[i];
            sse += residuals[i] * residuals[i];
        }
        const double n_total = static_cast<double>(rows.size());
        const double parent = score(total, n_total);
        // Ignore splits that only shuffle rounding noise.
        const double min_gain = 1e-12 * sse;

        for (std::size_t f = 0; f < bins_.size(); ++f) {
            const std::size_t nb = cuts_[f].size() + 1;
            if (nb < 2) continue;
            sum_.assign(nb, 0.0);
            cnt_.assign(nb, 0);
            double miss_sum = 0.0;
            std::size_t miss_cnt = 0;
            for (std::size_t i : rows) {
                const std::uint16_t b = bins_[f][i];
                if (b == kMissingBin) {
                    miss_sum += residuals[i];
                    ++miss_cnt;
                } else {
                    sum_[b] += residuals[i];
                    ++cnt_[b];
                }
            }
            const double present_sum = total - miss_sum;
            const std::size_t present_cnt = rows.size() - miss_cnt;
            double left_sum = 0.0;
            std::size_t left_cnt = 0;
            for (std::size_t k = 0; k + 1 < nb; ++k) {
                left_sum += sum_[k];
                left_cnt += cnt_[k];
                if (left_cnt == 0) continue;
                if (left_cnt == present_cnt) break;
                const double right_sum = present_sum - left_sum;
                const std::size_t right_cnt = present_cnt - left_cnt;
                for (int dir = 0; dir < 2; ++dir) {
                    const bool miss_left = dir == 0;
                    if (miss_cnt == 0 && dir == 1) break;
                    const double gl = left_sum + (miss_left ? miss_sum : 0.0);
                    const std::size_t nl = left_cnt + (miss_left ? miss_cnt : 0);
                    const double gr = right_sum + (miss_left ? 0.0 : miss_sum);
                    const std::size_t nr = right_cnt + (miss_left ? 0 : miss_cnt);
                    if (nl < min_leaf || nr < min_leaf) continue;
                    const double gain =
                        score(gl, static_cast<double>(nl)) + score(gr, static_cast<double>(nr)) - parent;
                    if (gain > min_gain && gain > best.gain) {
                        best.valid = true;
                        best.gain = gain;
                        best.feature = f;
                        best.bin = k;
                        // with nothing missing here, unseen missing values follow the larger side
                        best.missing_left = miss_cnt == 0 ? left_cnt >= right_cnt : miss_left;
                    }
                }
            }
        }
        return best;
    }

    const std::vector<std::vector<std::uint16_t>>& bins_;
    const std::vector<std::vector<double>>& cuts_;
    const GbdtParams& params_;
    std::vector<double> sum_;
    std::vector<std::size_t> cnt_;
};

double mean_squared(const std::vector<double>& r)
{
    double s = 0.0;
    for (double v : r) s += v * v;
    return s / static_cast<double>(r.size());
}

} // namespace

namespace {

// Total order on rows with missing values after every present value.
bool canonical_less(const FusionRow& a, const FusionRow& b)
{
    for (std::size_t f = 0; f < a.features.size(); ++f) {
        const double x = a.features[f];
        const double y = b.features[f];
        const bool mx = is_missing(x);
        const bool my = is_missing(y);
        if (mx != my) return my;
        if (!mx && x != y) return x < y;
    }
    if (a.target != b.target) return a.target < b.target;
    return a.event_id < b.event_id;
}

} // namespace

GbdtModel train_gbdt(const std::vector<FusionRow>& input_rows, const GbdtParams& params,
                     std::vector<CameraId> feature_names, std::string method, TrainingTrace* trace)
{
    params.validate();
    std::vector<FusionRow> rows = input_rows;
    if (rows.size() < 2) {
        throw ValidationError("train_gbdt: need at least 2 rows");
    }
    const std::size_t m = rows[0].features.size();
    for (const auto& r : rows) {
        if (r.features.size() != m) throw ValidationError("train_gbdt: rows have different feature counts");
        if (!std::isfinite(r.target)) throw NumericalError("train_gbdt: non-finite target for " + r.event_id);
        for (double v : r.features) {
            if (!is_missing(v) && !std::isfinite(v)) {
                throw NumericalError("train_gbdt: infinite feature value for " + r.event_id);
            }
        }
    }
    // Sums below run in a canonical row order, so the model does not depend on
    // how the caller ordered the rows.
    std::sort(rows.begin(), rows.end(), canonical_less);
    if (feature_names.empty()) {
        for (std::size_t f = 0; f < m; ++f) feature_names.push_back("f" + std::to_string(f));
    }
    if (feature_names.size() != m) {
        throw ValidationError("train_gbdt: feature name count does not match feature count");
    }

    GbdtModel model;
    model.method = std::move(method);
    model.feature_names = std::move(feature_names);
    model.learning_rate = params.learning_rate;
    model.params = params;

    const std::size_t n = rows.size();
    std::vector<std::vector<std::uint16_t>> bins(m, std::vector<std::uint16_t>(n, kMissingBin));
    std::vector<double> column(n);
    for (std::size_t f = 0; f < m; ++f) {
        for (std::size_t i = 0; i < n; ++i) column[i] = rows[i].features[f];
        auto cuts = histogram_cuts(column, params.max_bins);
        for (std::size_t i = 0; i < n; ++i) {
            if (is_missing(column[i])) continue;
            bins[f][i] = static_cast<std::uint16_t>(std::lower_bound(cuts.begin(), cuts.end(), column[i]) - cuts.begin());
        }
        model.bin_cuts.push_back(std::move(cuts));
    }

    double base = 0.0;
    for (const auto& r : rows) base += r.target;
    base /= static_cast<double>(n);
    model.base_prediction = base;

    std::vector<double> residuals(n);
    for (std::size_t i = 0; i < n; ++i) residuals[i] = rows[i].target - base;
    if (trace) trace->mse.push_back(mean_squared(residuals));

    TreeGrower grower(bins, model.bin_cuts, params);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
        Tree tree = grower.grow(residuals, n);
        if (tree.nodes.size() == 1) {
            break; // no split with positive gain; further trees cannot change anything
        }
        for (std::size_t i = 0; i < n; ++i) {
            residuals[i] -= tree.predict(rows[i].features);
        }
        if (trace) trace->mse.push_back(mean_squared(residuals));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

double predict_gbdt(const GbdtModel& model, std::span<const double> features)
{
    if (features.size() != model.n_features()) {
        throw ValidationError("predict_gbdt: expected " + std::to_string(model.n_features()) + " features, got " +
                              std::to_string(features.size()));
    }
    double y = model.base_prediction;
    for (const auto& t : model.trees) y += t.predict(features);
    return y;
}

// ---------------------------------------------------------------------------

namespace {

void write_node(const Tree& tree, std::size_t i, std::string& out)
{
    const auto& n = tree.nodes[i];
    if (n.is_leaf) {
        out += "L " + text::format_double(n.value) + "\n";
        return;
    }
    out += "N " + std::to_string(n.feature) + " " + text::format_double(n.threshold) + " " +
           (n.missing_left ? "L" : "R") + "\n";
    write_node(tree, n.left, out);
    write_node(tree, n.right, out);
}

class ModelReader {
public:
    explicit ModelReader(std::string_view content) : lines_(text::lines(content)) {}

    std::vector<std::string_view> next(std::string_view expect_tag)
    {
        while (pos_ < lines_.size() && text::split_ws(lines_[pos_]).empty()) ++pos_;
        if (pos_ >= lines_.size()) fail("unexpected end of file, expected " + std::string(expect_tag));
        auto f = text::split_ws(lines_[pos_++]);
        if (!expect_tag.empty() && f[0] != expect_tag) {
            fail("expected '" + std::string(expect_tag) + "', found '" + std::string(f[0]) + "'");
        }
        return f;
    }

    bool at_end()
    {
        while (pos_ < lines_.size() && text::split_ws(lines_[pos_]).empty()) ++pos_;
        return pos_ >= lines_.size();
    }

    std::size_t line() const noexcept { return pos_; }

    [[noreturn]] void fail(const std::string& why) const
    {
        throw FormatError("GBDT model line " + std::to_string(pos_) + ": " + why, pos_);
    }

    std::size_t read_node(Tree& tree, std::size_t n_features, std::size_t depth)
    {
        if (depth > 10000) fail("tree too deep");
        const auto f = next("");
        const std::size_t idx = tree.nodes.size();
        tree.nodes.emplace_back();
        if (f[0] == "L") {
            if (f.size() != 2) fail("leaf line needs 1 value");
            const double v = text::parse_double(f[1], "leaf value", line());
            if (!std::isfinite(v)) fail("non-finite leaf value");
            tree.nodes[idx].value = v;
            return idx;
        }
        if (f[0] != "N" || f.size() != 4) fail("expected node line 'N <feat> <thr> <L|R>' or leaf line 'L <value>'");
        const auto feat = text::parse_int(f[1], "feature index", line());
        if (feat < 0 || static_cast<std::size_t>(feat) >= n_features) fail("feature index out of range");
        const double thr = text::parse_double(f[2], "threshold", line());
        if (f[3] != "L" && f[3] != "R") fail("missing direction must be L or R");
        const bool missing_left = f[3] == "L";
        const std::size_t left = read_node(tree, n_features, depth + 1);
        const std::size_t right = read_node(tree, n_features, depth + 1);
        auto& n = tree.nodes[idx];
        n.is_leaf = false;
        n.feature = static_cast<std::size_t>(feat);
        n.threshold = thr;
        n.missing_left = missing_left;
        n.left = left;
        n.right = right;
        return idx;
    }

private:
    std::vector<std::string_view> lines_;
    std::size_t pos_ = 0;
};

} // namespace

std::string write_gbdt_model(const GbdtModel& model)
{
    std::string out = "GBDT 1 " + std::to_string(model.n_features()) + " " + text::format_double(model.base_prediction) +
                      " " + text::format_double(model.learning_rate) + "\n";
    const auto& p = model.params;
    out += "PARAMS " + std::to_string(p.n_trees) + " " + std::to_string(p.max_leaves) + " " +
           std::to_string(p.min_samples_leaf) + " " + text::format_double(p.leaf_l2) + " " +
           std::to_string(p.max_bins) + "\n";
    text::check_identifier(model.method, "method");
    out += "FEATURES " + model.method;
    for (const auto& name : model.feature_names) {
        text::check_identifier(name, "feature name");
        out += " " + name;
    }
    out += "\nTREES " + std::to_string(model.trees.size()) + "\n";
    for (const auto& t : model.trees) {
        out += "TREE " + std::to_string(t.nodes.size()) + "\n";
        write_node(t, 0, out);
    }
    for (std::size_t f = 0; f < model.bin_cuts.size(); ++f) {
        out += "BINS " + std::to_string(f) + " " + std::to_string(model.bin_cuts[f].size());
        for (double c : model.bin_cuts[f]) out += " " + text::format_double(c);
        out += "\n";
    }
    return out;
}

GbdtModel read_gbdt_model(std::string_view content)
{
    ModelReader in(content);
    GbdtModel model;
    auto h = in.next("GBDT");
    if (h.size() != 5) in.fail("header must be 'GBDT 1 <n_features> <base> <lr>'");
    if (h[1] != "1") in.fail("unsupported version " + std::string(h[1]));
    const auto n_features = text::parse_int(h[2], "n_features", 1);
    if (n_features < 0) in.fail("negative feature count");
    model.base_prediction = text::parse_double(h[3], "base prediction", 1);
    model.learning_rate = text::parse_double(h[4], "learning rate", 1);

    auto p = in.next("PARAMS");
    if (p.size() != 6) in.fail("PARAMS needs 5 values");
    model.params.n_trees = static_cast<std::size_t>(text::parse_int(p[1], "n_trees", in.line()));
    model.params.max_leaves = static_cast<std::size_t>(text::parse_int(p[2], "max_leaves", in.line()));
    model.params.min_samples_leaf = static_cast<std::size_t>(text::parse_int(p[3], "min_samples_leaf", in.line()));
    model.params.leaf_l2 = text::parse_double(p[4], "leaf_l2", in.line());
    model.params.max_bins = static_cast<std::size_t>(text::parse_int(p[5], "max_bins", in.line()));
    model.params.learning_rate = model.learning_rate;
    try {
        model.params.validate();
    } catch (const ValidationError& e) {
        in.fail(e.what());
    }

    auto f = in.next("FEATURES");
    if (f.size() != static_cast<std::size_t>(n_features) + 2) in.fail("FEATURES needs method and one name per feature");
    model.method = std::string(f[1]);
    for (std::size_t i = 2; i < f.size(); ++i) model.feature_names.emplace_back(f[i]);

    auto t = in.next("TREES");
    if (t.size() != 2) in.fail("TREES needs a count");
    const auto n_trees = text::parse_int(t[1], "tree count", in.line());
    if (n_trees < 0) in.fail("negative tree count");
    for (long long i = 0; i < n_trees; ++i) {
        auto th = in.next("TREE");
        if (th.size() != 2) in.fail("TREE needs a node count");
        const auto n_nodes = text::parse_int(th[1], "node count", in.line());
        Tree tree;
        in.read_node(tree, model.n_features(), 0);
        if (static_cast<long long>(tree.nodes.size()) != n_nodes) in.fail("node count mismatch");
        model.trees.push_back(std::move(tree));
    }
    for (long long i = 0; i < n_features; ++i) {
        auto b = in.next("BINS");
        if (b.size() < 3) in.fail("BINS needs feature index and count");
        if (text::parse_int(b[1], "feature index", in.line()) != i) in.fail("BINS out of order");
        const auto count = text::parse_int(b[2], "cut count", in.line());
        if (count < 0 || static_cast<std::size_t>(count) + 3 != b.size()) in.fail("BINS cut count mismatch");
        std::vector<double> cuts;
        for (std::size_t k = 3; k < b.size(); ++k) cuts.push_back(text::parse_double(b[k], "cut", in.line()));
        if (!std::is_sorted(cuts.begin(), cuts.end())) in.fail("BINS cuts must be sorted");
        model.bin_cuts.push_back(std::move(cuts));
    }
    if (!in.at_end()) in.fail("trailing data");
    return model;
}

} // namespace crowdcalib::fusion
