#pragma once

#include <span>
#include <vector>

namespace crowdcalib::stats {

/// Linear interpolation between closest ranks (h = (n-1)·fraction).
/// `fraction` is in [0,1]; `values` must be nonempty.
double percentile(std::vector<double> values, double fraction);

/// Same, on already-sorted input.
double percentile_sorted(std::span<const double> sorted, double fraction);

double mean(std::span<const double> values);

/// Population standard deviation.
double stddev_population(std::span<const double> values);

/// Median of integers, resolving even counts to the upper middle element.
int upper_median(std::vector<int> values);

} // namespace crowdcalib::stats
