#pragma once

#include "crowdcalib/domain.hpp"
#include "crowdcalib/features.hpp"

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crowdcalib::aggregation {

using features::FrameFeature;
using features::Method;

struct EventFeature {
    EventId event_id;
    CameraId camera;
    Method method = Method::DetCount;
    double value = 0.0;

    friend bool operator==(const EventFeature&, const EventFeature&) = default;
};

/// Numeric methods take the maximum over frames; CLASS_LEVEL takes the upper
/// median. All frames must share (event, camera, method); 1 to 3 frames.
EventFeature frames_to_event(std::span<const FrameFeature> frames);

/// Groups by (event, camera, method) and reduces each group. Output is sorted
/// by that key.
std::vector<EventFeature> frames_to_events(const std::vector<FrameFeature>& frames);

/// Numeric methods average, CLASS_LEVEL takes the upper median. Empty input
/// is an error; callers omit empty bins.
double events_to_bin(std::span<const double> values, Method method);

struct BinKey {
    std::string date; // YYYY-MM-DD, local to the platform
    int bin_of_day = 0;

    friend auto operator<=>(const BinKey&, const BinKey&) = default;
};

struct BinEntry {
    PlatformId platform;
    BinKey key;
    double value = 0.0;
    std::size_t n_events = 0;

    friend bool operator==(const BinEntry&, const BinEntry&) = default;
};

BinKey bin_key(const Timestamp& t);

/// 0..671 weekly bin of a bin key (Monday 00:00 = 0).
int weekly_bin(const BinKey& key);

/// Rolls per-event values into 15-minute bins using the events' arrival
/// times. Events without a value are skipped; bins with no events are absent.
std::vector<BinEntry> events_to_bins(const std::vector<ArrivalEvent>& events,
                                     const std::map<EventId, double>& event_values, Method method);

/// Mean ground-truth occupancy of the events in one bin.
double ground_truth_bin_mean(std::span<const ArrivalEvent> events);

/// Ground-truth bin series over all events.
std::vector<BinEntry> ground_truth_bins(const std::vector<ArrivalEvent>& events);

/// CSV: event_id,camera,method,value
std::string write_event_features_csv(const std::vector<EventFeature>& features);
std::vector<EventFeature> read_event_features_csv(std::string_view text);

/// CSV: event_id,value (per-event estimates, e.g. fused predictions)
std::string write_estimates_csv(const std::map<EventId, double>& estimates);
std::map<EventId, double> read_estimates_csv(std::string_view text);

/// CSV: platform,date,bin_of_day,value,n_events
std::string write_bins_csv(const std::vector<BinEntry>& bins);
std::vector<BinEntry> read_bins_csv(std::string_view text);

} // namespace crowdcalib::aggregation
