#include "crowdcalib/aggregation.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/stats.hpp"
#include "crowdcalib/text_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <tuple>

namespace crowdcalib::aggregation {

namespace {

int ordinal_median(std::span<const double> values)
{
    std::vector<int> levels;
    levels.reserve(values.size());
    for (double v : values) levels.push_back(static_cast<int>(std::lround(v)));
    return stats::upper_median(std::move(levels));
}

} // namespace

EventFeature frames_to_event(std::span<const FrameFeature> frames)
{
    if (frames.empty()) {
        throw ValidationError("frames_to_event: no frames");
    }
    if (frames.size() > 3) {
        throw ValidationError("frames_to_event: more than 3 frames for event " + frames[0].event_id);
    }
    const auto& first = frames[0];
    std::vector<double> values;
    for (const auto& f : frames) {
        if (f.event_id != first.event_id || f.camera != first.camera || f.method != first.method) {
            throw ValidationError("frames_to_event: frames belong to different (event, camera, method) groups");
        }
        values.push_back(f.value);
    }
    EventFeature out{first.event_id, first.camera, first.method, 0.0};
    if (features::is_ordinal(first.method)) {
        out.value = ordinal_median(values);
    } else {
        out.value = *std::max_element(values.begin(), values.end());
    }
    return out;
}

std::vector<EventFeature> frames_to_events(const std::vector<FrameFeature>& frames)
{
    std::map<std::tuple<EventId, CameraId, Method>, std::vector<FrameFeature>> groups;
    for (const auto& f : frames) {
        groups[{f.event_id, f.camera, f.method}].push_back(f);
    }
    std::vector<EventFeature> out;
    out.reserve(groups.size());
    for (const auto& [key, group] : groups) {
        out.push_back(frames_to_event(group));
    }
    return out;
}

double events_to_bin(std::span<const double> values, Method method)
{
    if (values.empty()) {
        throw ValidationError("events_to_bin: empty bin");
    }
    if (features::is_ordinal(method)) {
        return ordinal_median(values);
    }
    // sorted summation keeps the mean exactly independent of event order
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return stats::mean(sorted);
}

BinKey bin_key(const Timestamp& t)
{
    const LocalTime lt = to_local(t, t.offset);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", lt.year, lt.month, lt.day);
    return BinKey{buf, lt.hour * 4 + lt.minute / 15};
}

int weekly_bin(const BinKey& key)
{
    const Timestamp midnight = parse_rfc3339(key.date + "T00:00:00Z");
    return bin_index(midnight, TimeZoneOffset{0}) + key.bin_of_day;
}

std::vector<BinEntry> events_to_bins(const std::vector<ArrivalEvent>& events,
                                     const std::map<EventId, double>& event_values, Method method)
{
    std::map<std::pair<PlatformId, BinKey>, std::vector<double>> groups;
    for (const auto& e : events) {
        const auto it = event_values.find(e.event_id);
        if (it == event_values.end()) continue;
        groups[{e.platform, bin_key(e.arrival_time)}].push_back(it->second);
    }
    std::vector<BinEntry> out;
    for (const auto& [key, values] : groups) {
        out.push_back(BinEntry{key.first, key.second, events_to_bin(values, method), values.size()});
    }
    return out;
}

double ground_truth_bin_mean(std::span<const ArrivalEvent> events)
{
    if (events.empty()) {
        throw ValidationError("ground_truth_bin_mean: empty bin");
    }
    std::vector<double> occ;
    occ.reserve(events.size());
    for (const auto& e : events) occ.push_back(e.occupancy);
    return events_to_bin(occ, Method::DetCount);
}

std::vector<BinEntry> ground_truth_bins(const std::vector<ArrivalEvent>& events)
{
    std::map<std::pair<PlatformId, BinKey>, std::vector<ArrivalEvent>> groups;
    for (const auto& e : events) {
        ArrivalEvent slim{e.event_id, e.platform, e.arrival_time, e.occupancy, {}};
        groups[{e.platform, bin_key(e.arrival_time)}].push_back(std::move(slim));
    }
    std::vector<BinEntry> out;
    for (const auto& [key, group] : groups) {
        out.push_back(BinEntry{key.first, key.second, ground_truth_bin_mean(group), group.size()});
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string write_event_features_csv(const std::vector<EventFeature>& features)
{
    std::string out = "event_id,camera,method,value\n";
    for (const auto& f : features) {
        text::check_identifier(f.event_id, "event_id");
        text::check_identifier(f.camera, "camera");
        out += f.event_id + "," + f.camera + "," + std::string(features::to_string(f.method)) + "," +
               text::format_double(f.value) + "\n";
    }
    return out;
}

std::vector<EventFeature> read_event_features_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "event_id,camera,method,value") {
        throw FormatError("event features row 1: expected header event_id,camera,method,value", 1);
    }
    std::vector<EventFeature> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 4) throw FormatError("event features row " + std::to_string(row) + ": expected 4 fields", row);
        EventFeature ef;
        ef.event_id = std::string(f[0]);
        ef.camera = std::string(f[1]);
        try {
            ef.method = features::parse_method(f[2]);
        } catch (const ValidationError& e) {
            throw FormatError("event features row " + std::to_string(row) + ": " + e.what(), row);
        }
        ef.value = text::parse_double(f[3], "value", row);
        if (!std::isfinite(ef.value)) {
            throw FormatError("event features row " + std::to_string(row) + ": non-finite value", row);
        }
        out.push_back(std::move(ef));
    }
    return out;
}

std::string write_estimates_csv(const std::map<EventId, double>& estimates)
{
    std::string out = "event_id,value\n";
    for (const auto& [id, v] : estimates) {
        text::check_identifier(id, "event_id");
        out += id + "," + text::format_double(v) + "\n";
    }
    return out;
}

std::map<EventId, double> read_estimates_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "event_id,value") {
        throw FormatError("estimates row 1: expected header event_id,value", 1);
    }
    std::map<EventId, double> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 2) throw FormatError("estimates row " + std::to_string(row) + ": expected 2 fields", row);
        const double v = text::parse_double(f[1], "value", row);
        if (!std::isfinite(v)) throw FormatError("estimates row " + std::to_string(row) + ": non-finite value", row);
        if (!out.emplace(std::string(f[0]), v).second) {
            throw FormatError("estimates row " + std::to_string(row) + ": duplicate event_id", row);
        }
    }
    return out;
}

std::string write_bins_csv(const std::vector<BinEntry>& bins)
{
    std::string out = "platform,date,bin_of_day,value,n_events\n";
    for (const auto& b : bins) {
        text::check_identifier(b.platform, "platform");
        out += b.platform + "," + b.key.date + "," + std::to_string(b.key.bin_of_day) + "," +
               text::format_double(b.value) + "," + std::to_string(b.n_events) + "\n";
    }
    return out;
}

std::vector<BinEntry> read_bins_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "platform,date,bin_of_day,value,n_events") {
        throw FormatError("bins row 1: expected header platform,date,bin_of_day,value,n_events", 1);
    }
    std::vector<BinEntry> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 5) throw FormatError("bins row " + std::to_string(row) + ": expected 5 fields", row);
        BinEntry b;
        b.platform = std::string(f[0]);
        b.key.date = std::string(f[1]);
        try {
            (void)parse_rfc3339(b.key.date + "T00:00:00Z");
        } catch (const FormatError&) {
            throw FormatError("bins row " + std::to_string(row) + ": invalid date '" + b.key.date + "'", row);
        }
        const auto bod = text::parse_int(f[2], "bin_of_day", row);
        if (bod < 0 || bod >= kBinsPerDay) {
            throw FormatError("bins row " + std::to_string(row) + ": bin_of_day outside 0..95", row);
        }
        b.key.bin_of_day = static_cast<int>(bod);
        b.value = text::parse_double(f[3], "value", row);
        const auto n = text::parse_int(f[4], "n_events", row);
        if (n < 1) throw FormatError("bins row " + std::to_string(row) + ": n_events must be >= 1", row);
        b.n_events = static_cast<std::size_t>(n);
        out.push_back(std::move(b));
    }
    return out;
}

} // namespace crowdcalib::aggregation
