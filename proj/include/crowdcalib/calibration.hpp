#pragma once

#include "crowdcalib/domain.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crowdcalib::calibration {

/// Reduces non-overlapping p x q blocks. MAX takes the block maximum, MEAN the
/// fraction of set pixels. p must divide rows and q must divide cols.
PooledMap pool(const GridMask& mask, std::size_t p, std::size_t q, PoolMode mode);

/// Below this many samples per camera a fit still runs but warns.
inline constexpr std::size_t kRecommendedMinSamples = 600;

inline constexpr double kDefaultLambda = 1.0;
inline constexpr double kDefaultTolerance = 1e-8;

/// Ridge problem for one camera: minimize sum_i (y_i - <P_i, w>)^2 + lambda |w|^2.
/// Pooled maps are stored sparsely (row and column compressed) so the Gram
/// operator can be applied without forming X^T X.
class CalibrationProblem {
public:
    CalibrationProblem(CameraId camera, std::size_t prows, std::size_t pcols, double lambda,
                       PoolMode pool_mode = PoolMode::Max, std::size_t p = 1, std::size_t q = 1);

    /// Throws ValidationError on shape mismatch, NumericalError on non-finite data.
    void add_sample(const PooledMap& pooled, double y);

    const CameraId& camera() const noexcept { return camera_; }
    std::size_t prows() const noexcept { return prows_; }
    std::size_t pcols() const noexcept { return pcols_; }
    std::size_t p() const noexcept { return p_; }
    std::size_t q() const noexcept { return q_; }
    double lambda() const noexcept { return lambda_; }
    PoolMode pool_mode() const noexcept { return pool_mode_; }
    std::size_t dimension() const noexcept { return prows_ * pcols_; }
    std::size_t sample_count() const noexcept { return targets_.size(); }
    std::size_t nonzeros() const noexcept { return values_.size(); }
    std::span<const double> targets() const noexcept { return targets_; }

    /// Dense copy of sample i (row of the design matrix).
    std::vector<double> sample_row(std::size_t i) const;

    /// out = X w
    void apply_design(std::span<const double> w, std::span<double> out, std::size_t threads) const;

    /// out = X^T X w + lambda w
    void apply_gram(std::span<const double> w, std::span<double> out, std::size_t threads) const;

    /// X^T y
    std::vector<double> design_transpose_targets(std::size_t threads) const;

    /// sum_i (y_i - <P_i, w>)^2 + lambda |w|^2
    double objective(std::span<const double> w) const;

private:
    void apply_transpose(std::span<const double> z, std::span<double> out, std::size_t threads) const;
    void build_columns() const;

    CameraId camera_;
    std::size_t prows_;
    std::size_t pcols_;
    double lambda_;
    PoolMode pool_mode_;
    std::size_t p_;
    std::size_t q_;

    std::vector<double> targets_;
    std::vector<std::size_t> row_start_{0};
    std::vector<std::uint32_t> cols_;
    std::vector<double> values_;

    // Column-compressed mirror, built lazily on first transpose product.
    mutable bool columns_ready_ = false;
    mutable std::vector<std::size_t> col_start_;
    mutable std::vector<std::uint32_t> col_rows_;
    mutable std::vector<double> col_values_;
};

struct SolverOptions {
    double tol = kDefaultTolerance;
    /// 0 means 10 x dimension.
    std::size_t max_iter = 0;
    /// 0 means worker_threads().
    std::size_t threads = 0;
};

struct SolverReport {
    std::size_t iterations = 0;
    double final_residual_norm = 0.0;
    bool converged = false;
    double objective_value = 0.0;
    /// |b - A w_k| for k = 0..iterations.
    std::vector<double> residual_history;
};

/// Solves (X^T X + lambda I) w = X^T y matrix-free with the conjugate residual
/// variant of conjugate gradients, whose residual norm never increases.
/// Converged iff |r| <= tol |X^T y|. On non-convergence the iterate with the
/// smallest residual is returned with converged = false.
std::pair<WeightMap, SolverReport> fit_weight_map(const CalibrationProblem& problem, const SolverOptions& options = {});

/// sum_{j,k} P[j,k] w[j,k]; optionally floored at zero.
double estimate_occupancy(const PooledMap& pooled, const WeightMap& weights, bool clamp_nonnegative = false);

/// `WMAP 1 <camera> <prows> <pcols> <p> <q> <lambda> <pool_mode>` followed by
/// prows lines of pcols values, 17 significant digits.
std::string write_weight_map(const WeightMap& weights);
WeightMap read_weight_map(std::string_view text);

} // namespace crowdcalib::calibration
