#pragma once

#include "crowdcalib/domain.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::labeling {

/// Fits 50th/75th/98th percentile thresholds on the strictly positive
/// occupancies. Needs at least two positive values.
CrowdLevelScheme fit_scheme(std::span<const double> occupancies, const PlatformId& platform);

/// Labels every event; all events must belong to the scheme's platform.
std::map<EventId, CrowdLevel> label_events(const std::vector<ArrivalEvent>& events, const CrowdLevelScheme& scheme);

struct SplitAssignment {
    std::set<EventId> train_event_ids;
    std::set<EventId> test_event_ids;
    std::uint64_t seed = 0;

    friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

/// Event-level stratified split. Within each class, ids are sorted, shuffled
/// with a seed-derived stream and round-half-up(ratio * count) (at least one)
/// go to train.
SplitAssignment stratified_split(const std::map<EventId, CrowdLevel>& labels, double ratio, std::uint64_t seed);

std::vector<CrowdLevelScheme> read_scheme_csv(std::string_view text);
std::string write_scheme_csv(const std::vector<CrowdLevelScheme>& schemes);

std::map<EventId, CrowdLevel> read_labels_csv(std::string_view text);
std::string write_labels_csv(const std::map<EventId, CrowdLevel>& labels);

SplitAssignment read_split_csv(std::string_view text);
std::string write_split_csv(const SplitAssignment& split);

} // namespace crowdcalib::labeling
