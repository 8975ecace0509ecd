#include "crowdcalib/labeling.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/random.hpp"
#include "crowdcalib/stats.hpp"
#include "crowdcalib/text_io.hpp"

#include <algorithm>
#include <cmath>

namespace crowdcalib::labeling {

CrowdLevelScheme fit_scheme(std::span<const double> occupancies, const PlatformId& platform)
{
    std::vector<double> positive;
    positive.reserve(occupancies.size());
    for (double v : occupancies) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ValidationError("fit_scheme: occupancies must be finite and nonnegative");
        }
        if (v > 0.0) positive.push_back(v);
    }
    if (positive.size() < 2) {
        throw ValidationError("fit_scheme: need at least 2 nonzero occupancies for platform " + platform + " (got " +
                              std::to_string(positive.size()) + ")");
    }
    std::sort(positive.begin(), positive.end());
    CrowdLevelScheme scheme;
    scheme.platform = platform;
    scheme.t50 = stats::percentile_sorted(positive, 0.50);
    scheme.t75 = stats::percentile_sorted(positive, 0.75);
    scheme.t98 = stats::percentile_sorted(positive, 0.98);
    scheme.validate();
    return scheme;
}

std::map<EventId, CrowdLevel> label_events(const std::vector<ArrivalEvent>& events, const CrowdLevelScheme& scheme)
{
    scheme.validate();
    std::map<EventId, CrowdLevel> out;
    for (const auto& e : events) {
        if (e.platform != scheme.platform) {
            throw ValidationError("label_events: event " + e.event_id + " is on platform " + e.platform +
                                  " but the scheme is for " + scheme.platform);
        }
        out[e.event_id] = crowd_level(e.occupancy, scheme);
    }
    return out;
}

SplitAssignment stratified_split(const std::map<EventId, CrowdLevel>& labels, double ratio, std::uint64_t seed)
{
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ValidationError("stratified_split: ratio must be in (0,1)");
    }
    // std::map iteration is already sorted by event id, so input order never matters.
    std::array<std::vector<EventId>, 4> by_class;
    for (const auto& [id, level] : labels) {
        by_class[static_cast<std::size_t>(level)].push_back(id);
    }
    SplitAssignment split;
    split.seed = seed;
    for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
        auto& ids = by_class[cls];
        if (ids.empty()) continue;
        Rng rng(mix_seed(seed, cls));
        for (std::size_t i = ids.size() - 1; i > 0; --i) {
            std::swap(ids[i], ids[static_cast<std::size_t>(rng.below(i + 1))]);
        }
        const double share = ratio * static_cast<double>(ids.size());
        std::size_t n_train = static_cast<std::size_t>(std::floor(share + 0.5));
        n_train = std::clamp<std::size_t>(n_train, 1, ids.size());
        if (n_train == ids.size()) {
            warn("stratified_split: class " + std::string(to_string(static_cast<CrowdLevel>(cls))) +
                 " has no test events (" + std::to_string(ids.size()) + " events)");
        }
        for (std::size_t i = 0; i < ids.size(); ++i) {
            (i < n_train ? split.train_event_ids : split.test_event_ids).insert(ids[i]);
        }
    }
    return split;
}

// ---------------------------------------------------------------------------

std::vector<CrowdLevelScheme> read_scheme_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "platform,t50,t75,t98") {
        throw FormatError("scheme row 1: expected header platform,t50,t75,t98", 1);
    }
    std::vector<CrowdLevelScheme> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 4) throw FormatError("scheme row " + std::to_string(row) + ": expected 4 fields", row);
        CrowdLevelScheme s{std::string(f[0]), text::parse_double(f[1], "t50", row),
                           text::parse_double(f[2], "t75", row), text::parse_double(f[3], "t98", row)};
        try {
            s.validate();
        } catch (const ValidationError& e) {
            throw FormatError("scheme row " + std::to_string(row) + ": " + e.what(), row);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string write_scheme_csv(const std::vector<CrowdLevelScheme>& schemes)
{
    std::string out = "platform,t50,t75,t98\n";
    for (const auto& s : schemes) {
        text::check_identifier(s.platform, "platform");
        out += s.platform + "," + text::format_double(s.t50) + "," + text::format_double(s.t75) + "," +
               text::format_double(s.t98) + "\n";
    }
    return out;
}

std::map<EventId, CrowdLevel> read_labels_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "event_id,level") {
        throw FormatError("labels row 1: expected header event_id,level", 1);
    }
    std::map<EventId, CrowdLevel> out;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 2) throw FormatError("labels row " + std::to_string(row) + ": expected 2 fields", row);
        try {
            if (!out.emplace(std::string(f[0]), parse_crowd_level(f[1])).second) {
                throw FormatError("labels row " + std::to_string(row) + ": duplicate event_id", row);
            }
        } catch (const ValidationError& e) {
            throw FormatError("labels row " + std::to_string(row) + ": " + e.what(), row);
        }
    }
    return out;
}

std::string write_labels_csv(const std::map<EventId, CrowdLevel>& labels)
{
    std::string out = "event_id,level\n";
    for (const auto& [id, level] : labels) {
        text::check_identifier(id, "event_id");
        out += id + "," + std::string(to_string(level)) + "\n";
    }
    return out;
}

SplitAssignment read_split_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "event_id,split") {
        throw FormatError("split row 1: expected header event_id,split", 1);
    }
    SplitAssignment split;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 2) throw FormatError("split row " + std::to_string(row) + ": expected 2 fields", row);
        const EventId id(f[0]);
        if (split.train_event_ids.count(id) || split.test_event_ids.count(id)) {
            throw FormatError("split row " + std::to_string(row) + ": duplicate event_id " + id, row);
        }
        if (f[1] == "train") {
            split.train_event_ids.insert(id);
        } else if (f[1] == "test") {
            split.test_event_ids.insert(id);
        } else {
            throw FormatError("split row " + std::to_string(row) + ": split must be train or test", row);
        }
    }
    return split;
}

std::string write_split_csv(const SplitAssignment& split)
{
    std::map<EventId, const char*> rows;
    for (const auto& id : split.train_event_ids) rows[id] = "train";
    for (const auto& id : split.test_event_ids) {
        if (!rows.emplace(id, "test").second) {
            throw ValidationError("write_split_csv: event " + id + " is in both train and test");
        }
    }
    std::string out = "event_id,split\n";
    for (const auto& [id, side] : rows) {
        text::check_identifier(id, "event_id");
        out += id + "," + side + "\n";
    }
    return out;
}

} // namespace crowdcalib::labeling
