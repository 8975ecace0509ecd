#include "crowdcalib/stats.hpp"

#include "crowdcalib/error.hpp"

#include <algorithm>
#include <cmath>

namespace crowdcalib::stats {

double percentile_sorted(std::span<const double> sorted, double fraction)
{
    if (sorted.empty()) {
        throw ValidationError("percentile of an empty sample");
    }
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ValidationError("percentile fraction outside [0,1]");
    }
    const double h = static_cast<double>(sorted.size() - 1) * fraction;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0 || lo == hi) {
        return sorted[lo];
    }
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::vector<double> values, double fraction)
{
    std::sort(values.begin(), values.end());
    return percentile_sorted(values, fraction);
}

double mean(std::span<const double> values)
{
    if (values.empty()) {
        throw ValidationError("mean of an empty sample");
    }
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double stddev_population(std::span<const double> values)
{
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size()));
}

int upper_median(std::vector<int> values)
{
    if (values.empty()) {
        throw ValidationError("median of an empty sample");
    }
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

} // namespace crowdcalib::stats
