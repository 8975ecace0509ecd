#include "crowdcalib/calibration.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/parallel.hpp"
#include "crowdcalib/text_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace crowdcalib::calibration {

PooledMap pool(const GridMask& mask, std::size_t p, std::size_t q, PoolMode mode)
{
    if (mask.empty()) {
        throw ValidationError("pool: empty mask");
    }
    if (p == 0 || q == 0 || mask.rows() % p != 0 || mask.cols() % q != 0) {
        throw ValidationError("pool: block " + std::to_string(p) + "x" + std::to_string(q) + " does not divide mask " +
                              std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()));
    }
    PooledMap out;
    out.prows = mask.rows() / p;
    out.pcols = mask.cols() / q;
    out.values.assign(out.prows * out.pcols, 0.0);
    std::vector<std::size_t> counts(out.pcols);
    const double area = static_cast<double>(p * q);
    for (std::size_t j = 0; j < out.prows; ++j) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t r = j * p; r < (j + 1) * p; ++r) {
            for (std::size_t k = 0; k < out.pcols; ++k) {
                counts[k] += mask.count_span(r, k * q, (k + 1) * q);
            }
        }
        double* row = out.values.data() + j * out.pcols;
        for (std::size_t k = 0; k < out.pcols; ++k) {
            if (mode == PoolMode::Max) {
                row[k] = counts[k] > 0 ? 1.0 : 0.0;
            } else {
                row[k] = static_cast<double>(counts[k]) / area;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

CalibrationProblem::CalibrationProblem(CameraId camera, std::size_t prows, std::size_t pcols, double lambda,
                                       PoolMode pool_mode, std::size_t p, std::size_t q)
    : camera_(std::move(camera)), prows_(prows), pcols_(pcols), lambda_(lambda), pool_mode_(pool_mode), p_(p), q_(q)
{
    if (prows == 0 || pcols == 0) {
        throw ValidationError("CalibrationProblem: pooled dimensions must be positive");
    }
    if (prows * pcols > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError("CalibrationProblem: too many pooled cells");
    }
    if (!std::isfinite(lambda)) {
        throw NumericalError("CalibrationProblem: non-finite lambda");
    }
    if (!(lambda > 0.0)) {
        throw ValidationError("CalibrationProblem: lambda must be > 0");
    }
    if (p == 0 || q == 0) {
        throw ValidationError("CalibrationProblem: pooling block sizes must be >= 1");
    }
}

void CalibrationProblem::add_sample(const PooledMap& pooled, double y)
{
    if (pooled.prows != prows_ || pooled.pcols != pcols_ || pooled.values.size() != prows_ * pcols_) {
        throw ValidationError("CalibrationProblem " + camera_ + ": pooled map " + std::to_string(pooled.prows) + "x" +
                              std::to_string(pooled.pcols) + " does not match " + std::to_string(prows_) + "x" +
                              std::to_string(pcols_));
    }
    if (!std::isfinite(y)) {
        throw NumericalError("CalibrationProblem " + camera_ + ": non-finite target");
    }
    if (y < 0.0) {
        throw ValidationError("CalibrationProblem " + camera_ + ": negative target");
    }
    for (std::size_t i = 0; i < pooled.values.size(); ++i) {
        const double v = pooled.values[i];
        if (!std::isfinite(v)) {
            throw NumericalError("CalibrationProblem " + camera_ + ": non-finite pooled value");
        }
        if (v != 0.0) {
            cols_.push_back(static_cast<std::uint32_t>(i));
            values_.push_back(v);
        }
    }
    row_start_.push_back(values_.size());
    targets_.push_back(y);
    columns_ready_ = false;
}

std::vector<double> CalibrationProblem::sample_row(std::size_t i) const
{
    std::vector<double> row(dimension(), 0.0);
    for (std::size_t e = row_start_[i]; e < row_start_[i + 1]; ++e) {
        row[cols_[e]] = values_[e];
    }
    return row;
}

void CalibrationProblem::build_columns() const
{
    const std::size_t d = dimension();
    col_start_.assign(d + 1, 0);
    for (auto c : cols_) ++col_start_[c + 1];
    for (std::size_t j = 0; j < d; ++j) col_start_[j + 1] += col_start_[j];
    col_rows_.resize(values_.size());
    col_values_.resize(values_.size());
    std::vector<std::size_t> fill(col_start_.begin(), col_start_.end() - 1);
    for (std::size_t i = 0; i < sample_count(); ++i) {
        for (std::size_t e = row_start_[i]; e < row_start_[i + 1]; ++e) {
            const std::size_t slot = fill[cols_[e]]++;
            col_rows_[slot] = static_cast<std::uint32_t>(i);
            col_values_[slot] = values_[e];
        }
    }
    columns_ready_ = true;
}

void CalibrationProblem::apply_design(std::span<const double> w, std::span<double> out, std::size_t threads) const
{
    parallel_chunks(sample_count(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) {
            double s = 0.0;
            for (std::size_t e = row_start_[i]; e < row_start_[i + 1]; ++e) {
                s += values_[e] * w[cols_[e]];
            }
            out[i] = s;
        }
    });
}

void CalibrationProblem::apply_transpose(std::span<const double> z, std::span<double> out, std::size_t threads) const
{
    if (!columns_ready_) {
        build_columns();
    }
    // Each output cell sums its column in sample order, so the result does not
    // depend on the thread count.
    parallel_chunks(dimension(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t j = begin; j < end; ++j) {
            double s = 0.0;
            for (std::size_t e = col_start_[j]; e < col_start_[j + 1]; ++e) {
                s += col_values_[e] * z[col_rows_[e]];
            }
            out[j] = s;
        }
    });
}

void CalibrationProblem::apply_gram(std::span<const double> w, std::span<double> out, std::size_t threads) const
{
    std::vector<double> z(sample_count());
    apply_design(w, z, threads);
    apply_transpose(z, out, threads);
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] += lambda_ * w[j];
    }
}

std::vector<double> CalibrationProblem::design_transpose_targets(std::size_t threads) const
{
    std::vector<double> out(dimension());
    apply_transpose(targets_, out, threads);
    return out;
}

double CalibrationProblem::objective(std::span<const double> w) const
{
    double loss = 0.0;
    for (std::size_t i = 0; i < sample_count(); ++i) {
        double s = 0.0;
        for (std::size_t e = row_start_[i]; e < row_start_[i + 1]; ++e) {
            s += values_[e] * w[cols_[e]];
        }
        const double r = targets_[i] - s;
        loss += r * r;
    }
    double norm2 = 0.0;
    for (double v : w) norm2 += v * v;
    return loss + lambda_ * norm2;
}

// ---------------------------------------------------------------------------

namespace {

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

std::pair<WeightMap, SolverReport> fit_weight_map(const CalibrationProblem& problem, const SolverOptions& options)
{
    if (!(options.tol > 0.0)) {
        throw ValidationError("fit_weight_map: tol must be > 0");
    }
    if (problem.sample_count() == 0) {
        throw ValidationError("fit_weight_map: camera " + problem.camera() + " has no samples");
    }
    if (problem.sample_count() < kRecommendedMinSamples) {
        warn("calibration for camera " + problem.camera() + " uses " + std::to_string(problem.sample_count()) +
             " samples; at least " + std::to_string(kRecommendedMinSamples) + " are recommended");
    }
    const std::size_t d = problem.dimension();
    const std::size_t threads = options.threads == 0 ? worker_threads() : options.threads;
    const std::size_t max_iter = options.max_iter == 0 ? 10 * d : options.max_iter;

    const std::vector<double> b = problem.design_transpose_targets(threads);
    const double b_norm = std::sqrt(dot(b, b));
    const double target = options.tol * b_norm;

    std::vector<double> x(d, 0.0);
    std::vector<double> r = b;
    std::vector<double> ar(d), p(d), ap(d), tmp(d);

    auto true_residual = [&] {
        problem.apply_gram(x, tmp, threads);
        for (std::size_t j = 0; j < d; ++j) r[j] = b[j] - tmp[j];
        return std::sqrt(dot(r, r));
    };

    SolverReport report;
    double r_norm = b_norm;
    report.residual_history.push_back(r_norm);
    std::size_t it = 0;
    bool converged = r_norm <= target;
    int restarts = 0;
    while (!converged && it < max_iter) {
        problem.apply_gram(r, ar, threads);
        p = r;
        ap = ar;
        double r_ar = dot(r, ar);
        while (it < max_iter) {
            const double ap2 = dot(ap, ap);
            if (!(ap2 > 0.0)) break;
            // Exact line minimizer of |r - alpha A p|, so |r| cannot grow.
            const double alpha = dot(r, ap) / ap2;
            for (std::size_t j = 0; j < d; ++j) {
                x[j] += alpha * p[j];
                r[j] -= alpha * ap[j];
            }
            ++it;
            r_norm = std::sqrt(dot(r, r));
            if (!std::isfinite(r_norm)) {
                throw NumericalError("fit_weight_map: solver diverged for camera " + problem.camera());
            }
            report.residual_history.push_back(r_norm);
            if (r_norm <= target) break;
            problem.apply_gram(r, ar, threads);
            const double r_ar_new = dot(r, ar);
            const double beta = r_ar_new / r_ar;
            r_ar = r_ar_new;
            for (std::size_t j = 0; j < d; ++j) {
                p[j] = r[j] + beta * p[j];
                ap[j] = ar[j] + beta * ap[j];
            }
        }
        // The recursive residual drifts from b - A x in floating point;
        // convergence is judged on the true residual, restarting if needed.
        const double recursive = r_norm;
        r_norm = true_residual();
        if (r_norm <= target) {
            converged = true;
        } else if (recursive > target || ++restarts > 3) {
            break;
        }
    }
    report.iterations = it;
    report.converged = converged;
    report.final_residual_norm = r_norm;
    report.objective_value = problem.objective(x);

    WeightMap w;
    w.camera = problem.camera();
    w.prows = problem.prows();
    w.pcols = problem.pcols();
    w.p = problem.p();
    w.q = problem.q();
    w.lambda = problem.lambda();
    w.pool_mode = problem.pool_mode();
    w.values = std::move(x);
    return {std::move(w), std::move(report)};
}

double estimate_occupancy(const PooledMap& pooled, const WeightMap& weights, bool clamp_nonnegative)
{
    if (pooled.prows != weights.prows || pooled.pcols != weights.pcols ||
        pooled.values.size() != weights.values.size()) {
        throw ValidationError("estimate_occupancy: pooled map " + std::to_string(pooled.prows) + "x" +
                              std::to_string(pooled.pcols) + " does not match weight map " +
                              std::to_string(weights.prows) + "x" + std::to_string(weights.pcols));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pooled.values.size(); ++i) {
        s += pooled.values[i] * weights.values[i];
    }
    return clamp_nonnegative ? std::max(0.0, s) : s;
}

// ---------------------------------------------------------------------------

std::string write_weight_map(const WeightMap& weights)
{
    weights.validate();
    text::check_identifier(weights.camera, "camera");
    std::string out = "WMAP 1 " + weights.camera + " " + std::to_string(weights.prows) + " " +
                      std::to_string(weights.pcols) + " " + std::to_string(weights.p) + " " +
                      std::to_string(weights.q) + " " + text::format_double17(weights.lambda) + " " +
                      std::string(to_string(weights.pool_mode)) + "\n";
    for (std::size_t j = 0; j < weights.prows; ++j) {
        for (std::size_t k = 0; k < weights.pcols; ++k) {
            if (k > 0) out += ' ';
            out += text::format_double17(weights.at(j, k));
        }
        out += '\n';
    }
    return out;
}

WeightMap read_weight_map(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty()) throw FormatError("weight map: empty file", 1);
    const auto h = text::split_ws(all[0]);
    if (h.size() != 9 || h[0] != "WMAP") throw FormatError("weight map line 1: expected WMAP header with 8 fields", 1);
    if (h[1] != "1") throw FormatError("weight map line 1: unsupported version " + std::string(h[1]), 1);
    WeightMap w;
    w.camera = std::string(h[2]);
    const auto prows = text::parse_int(h[3], "prows", 1);
    const auto pcols = text::parse_int(h[4], "pcols", 1);
    const auto p = text::parse_int(h[5], "p", 1);
    const auto q = text::parse_int(h[6], "q", 1);
    if (prows <= 0 || pcols <= 0 || p <= 0 || q <= 0) {
        throw FormatError("weight map line 1: dimensions and block sizes must be positive", 1);
    }
    w.prows = static_cast<std::size_t>(prows);
    w.pcols = static_cast<std::size_t>(pcols);
    w.p = static_cast<std::size_t>(p);
    w.q = static_cast<std::size_t>(q);
    w.lambda = text::parse_double(h[7], "lambda", 1);
    try {
        w.pool_mode = parse_pool_mode(h[8]);
    } catch (const ValidationError& e) {
        throw FormatError(std::string("weight map line 1: ") + e.what(), 1);
    }
    std::size_t line = 1;
    for (std::size_t j = 0; j < w.prows; ++j) {
        ++line;
        if (line > all.size()) throw FormatError("weight map: expected " + std::to_string(w.prows) + " value rows", line);
        const auto f = text::split_ws(all[line - 1]);
        if (f.size() != w.pcols) {
            throw FormatError("weight map line " + std::to_string(line) + ": expected " + std::to_string(w.pcols) +
                                  " values",
                              line);
        }
        for (auto v : f) {
            const double x = text::parse_double(v, "weight", line);
            if (!std::isfinite(x)) throw FormatError("weight map line " + std::to_string(line) + ": non-finite weight", line);
            w.values.push_back(x);
        }
    }
    for (std::size_t i = line; i < all.size(); ++i) {
        if (!text::split_ws(all[i]).empty()) {
            throw FormatError("weight map line " + std::to_string(i + 1) + ": trailing data", i + 1);
        }
    }
    try {
        w.validate();
    } catch (const ValidationError& e) {
        throw FormatError(std::string("weight map: ") + e.what());
    }
    return w;
}

} // namespace crowdcalib::calibration
