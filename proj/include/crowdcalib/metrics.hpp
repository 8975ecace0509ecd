#pragma once

#include "crowdcalib/domain.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::metrics {

struct EvalPair {
    std::string key; // image, event, or bin identity
    double y = 0.0;
    double y_hat = 0.0;
    int bin_index = -1; // 0..671, required by wmae only
};

/// 1 - SS_res / SS_tot. Throws ValidationError on < 2 pairs or zero target variance.
double r2(std::span<const EvalPair> pairs);

/// R^2 of the z-scored series (population sigma); equals 2 rho - 1.
double r2_normalized(std::span<const EvalPair> pairs);

double pearson(std::span<const EvalPair> pairs);

/// 95th percentile of |y - y_hat|, linear interpolation.
double ae_p95(std::span<const EvalPair> pairs);

double mae(std::span<const EvalPair> pairs);

/// sum w |y - y_hat| / sum w with w = 1 + |(y - mu_b) / sigma_b|. Bins with
/// sigma 0 use w = 1 and warn once per call.
double wmae(std::span<const EvalPair> pairs, const WeeklyBinStats& stats);

/// w_t for one pair.
double wmae_weight(double y, const BinStat& stat);

enum class Level { Image, Event, Bin };
std::string_view to_string(Level level);
Level parse_level(std::string_view s);

struct MetricRow {
    Level level = Level::Event;
    std::string method;
    std::string metric;
    double value = 0.0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

/// mae, ae_p95, r2, r2_normalized, and wmae when stats are given. Metrics
/// whose preconditions fail (for example zero variance) are skipped with a warning.
std::vector<MetricRow> evaluate(Level level, const std::string& method, std::span<const EvalPair> pairs,
                                const WeeklyBinStats* stats = nullptr);

/// CSV: level,method,metric,value
std::string write_report_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_report_csv(std::string_view text);

/// CSV: y,y_hat
std::string write_plot_data_csv(std::span<const EvalPair> pairs);
std::vector<EvalPair> read_plot_data_csv(std::string_view text);

} // namespace crowdcalib::metrics
