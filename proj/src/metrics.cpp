#include "crowdcalib/metrics.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/stats.hpp"
#include "crowdcalib/text_io.hpp"

#include <algorithm>
#include <cmath>

namespace crowdcalib::metrics {

namespace {

// Sums run over a canonical ordering so every metric is exactly independent
// of the input order.
std::vector<EvalPair> canonical(std::span<const EvalPair> pairs)
{
    std::vector<EvalPair> out(pairs.begin(), pairs.end());
    for (const auto& p : out) {
        if (!std::isfinite(p.y) || !std::isfinite(p.y_hat)) {
            throw NumericalError("metrics: non-finite value for " + p.key);
        }
    }
    std::sort(out.begin(), out.end(), [](const EvalPair& a, const EvalPair& b) {
        if (a.y != b.y) return a.y < b.y;
        if (a.y_hat != b.y_hat) return a.y_hat < b.y_hat;
        return a.bin_index < b.bin_index;
    });
    return out;
}

void require(std::size_t n, std::size_t min, const char* what)
{
    if (n < min) {
        throw ValidationError(std::string(what) + ": need at least " + std::to_string(min) + " pairs");
    }
}

struct Moments {
    double mean_y = 0.0, mean_h = 0.0;
    double syy = 0.0, shh = 0.0, syh = 0.0; // centered sums
};

Moments moments(const std::vector<EvalPair>& v)
{
    Moments m;
    for (const auto& p : v) {
        m.mean_y += p.y;
        m.mean_h += p.y_hat;
    }
    const double n = static_cast<double>(v.size());
    m.mean_y /= n;
    m.mean_h /= n;
    for (const auto& p : v) {
        const double dy = p.y - m.mean_y;
        const double dh = p.y_hat - m.mean_h;
        m.syy += dy * dy;
        m.shh += dh * dh;
        m.syh += dy * dh;
    }
    return m;
}

} // namespace

double r2(std::span<const EvalPair> pairs)
{
    require(pairs.size(), 2, "r2");
    const auto v = canonical(pairs);
    const auto m = moments(v);
    if (m.syy == 0.0) throw ValidationError("r2: target variance is zero");
    double ss_res = 0.0;
    for (const auto& p : v) ss_res += (p.y - p.y_hat) * (p.y - p.y_hat);
    return 1.0 - ss_res / m.syy;
}

double r2_normalized(std::span<const EvalPair> pairs)
{
    require(pairs.size(), 2, "r2_normalized");
    const auto v = canonical(pairs);
    const auto m = moments(v);
    if (m.syy == 0.0 || m.shh == 0.0) throw ValidationError("r2_normalized: zero variance in targets or estimates");
    const double n = static_cast<double>(v.size());
    const double sd_y = std::sqrt(m.syy / n);
    const double sd_h = std::sqrt(m.shh / n);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (const auto& p : v) {
        const double zy = (p.y - m.mean_y) / sd_y;
        const double zh = (p.y_hat - m.mean_h) / sd_h;
        ss_res += (zy - zh) * (zy - zh);
        ss_tot += zy * zy;
    }
    return 1.0 - ss_res / ss_tot;
}

double pearson(std::span<const EvalPair> pairs)
{
    require(pairs.size(), 2, "pearson");
    const auto m = moments(canonical(pairs));
    if (m.syy == 0.0 || m.shh == 0.0) throw ValidationError("pearson: zero variance in targets or estimates");
    return m.syh / std::sqrt(m.syy * m.shh);
}

double ae_p95(std::span<const EvalPair> pairs)
{
    require(pairs.size(), 1, "ae_p95");
    std::vector<double> err;
    err.reserve(pairs.size());
    for (const auto& p : canonical(pairs)) err.push_back(std::fabs(p.y - p.y_hat));
    return stats::percentile(std::move(err), 0.95);
}

double mae(std::span<const EvalPair> pairs)
{
    require(pairs.size(), 1, "mae");
    double s = 0.0;
    const auto v = canonical(pairs);
    for (const auto& p : v) s += std::fabs(p.y - p.y_hat);
    return s / static_cast<double>(v.size());
}

double wmae_weight(double y, const BinStat& stat)
{
    if (!(stat.sigma > 0.0)) return 1.0;
    return 1.0 + std::fabs((y - stat.mu) / stat.sigma);
}

double wmae(std::span<const EvalPair> pairs, const WeeklyBinStats& stats)
{
    require(pairs.size(), 1, "wmae");
    double num = 0.0;
    double den = 0.0;
    std::size_t degenerate = 0;
    for (const auto& p : canonical(pairs)) {
        if (p.bin_index < 0 || p.bin_index >= kWeeklyBins) {
            throw ValidationError("wmae: no weekly bin statistics for bin " + std::to_string(p.bin_index) + " (" +
                                  p.key + ")");
        }
        const auto& stat = stats.entries[static_cast<std::size_t>(p.bin_index)];
        if (!(stat.sigma > 0.0)) ++degenerate;
        const double w = wmae_weight(p.y, stat);
        num += w * std::fabs(p.y - p.y_hat);
        den += w;
    }
    if (degenerate > 0) {
        warn("wmae: " + std::to_string(degenerate) + " pairs fall in bins with sigma 0; their weight is 1");
    }
    return num / den;
}

std::string_view to_string(Level level)
{
    switch (level) {
    case Level::Image: return "image";
    case Level::Event: return "event";
    case Level::Bin: return "bin";
    }
    return "?";
}

Level parse_level(std::string_view s)
{
    if (s == "image") return Level::Image;
    if (s == "event") return Level::Event;
    if (s == "bin") return Level::Bin;
    throw ValidationError("unknown evaluation level '" + std::string(s) + "' (expected image, event or bin)");
}

std::vector<MetricRow> evaluate(Level level, const std::string& method, std::span<const EvalPair> pairs,
                                const WeeklyBinStats* stats)
{
    std::vector<MetricRow> rows;
    auto add = [&](const char* name, auto&& fn) {
        try {
            rows.push_back({level, method, name, fn()});
        } catch (const ValidationError& e) {
            warn(std::string("evaluate: skipping ") + name + ": " + e.what());
        }
    };
    add("mae", [&] { return mae(pairs); });
    add("ae_p95", [&] { return ae_p95(pairs); });
    add("r2", [&] { return r2(pairs); });
    add("r2_normalized", [&] { return r2_normalized(pairs); });
    if (stats) add("wmae", [&] { return wmae(pairs, *stats); });
    return rows;
}

std::string write_report_csv(const std::vector<MetricRow>& rows)
{
    std::string out = "level,method,metric,value\n";
    for (const auto& r : rows) {
        text::check_identifier(r.method, "method");
        text::check_identifier(r.metric, "metric");
        out += std::string(to_string(r.level)) + "," + r.method + "," + r.metric + "," + text::format_double(r.value) +
               "\n";
    }
    return out;
}

std::vector<MetricRow> read_report_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "level,method,metric,value") {
        throw FormatError("report row 1: expected header level,method,metric,value", 1);
    }
    std::vector<MetricRow> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 4) throw FormatError("report row " + std::to_string(row) + ": expected 4 fields", row);
        MetricRow r;
        try {
            r.level = parse_level(f[0]);
        } catch (const ValidationError& e) {
            throw FormatError("report row " + std::to_string(row) + ": " + e.what(), row);
        }
        r.method = std::string(f[1]);
        r.metric = std::string(f[2]);
        r.value = text::parse_double(f[3], "value", row);
        out.push_back(std::move(r));
    }
    return out;
}

std::string write_plot_data_csv(std::span<const EvalPair> pairs)
{
    std::string out = "y,y_hat\n";
    for (const auto& p : pairs) out += text::format_double(p.y) + "," + text::format_double(p.y_hat) + "\n";
    return out;
}

std::vector<EvalPair> read_plot_data_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "y,y_hat") throw FormatError("plot data row 1: expected header y,y_hat", 1);
    std::vector<EvalPair> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 2) throw FormatError("plot data row " + std::to_string(row) + ": expected 2 fields", row);
        EvalPair p;
        p.key = std::to_string(row);
        p.y = text::parse_double(f[0], "y", row);
        p.y_hat = text::parse_double(f[1], "y_hat", row);
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace crowdcalib::metrics
