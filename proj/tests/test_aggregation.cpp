#include "crowdcalib/aggregation.hpp"
#include "crowdcalib/error.hpp"
#include "crowdcalib/random.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace crowdcalib;
using namespace crowdcalib::aggregation;

namespace {

std::vector<FrameFeature> frames(Method m, std::vector<double> values, const std::string& event = "e",
                                 const std::string& camera = "c")
{
    std::vector<FrameFeature> out;
    const int offsets[] = {-5, 0, 5};
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back({camera, event, offsets[i % 3], m, values[i]});
    return out;
}

ArrivalEvent arrival(const std::string& id, const std::string& time, double occupancy)
{
    ArrivalEvent e;
    e.event_id = id;
    e.platform = "P";
    e.arrival_time = parse_rfc3339(time);
    e.occupancy = occupancy;
    return e;
}

} // namespace

TEST_CASE("frames to event")
{
    CHECK(frames_to_event(frames(Method::DetCount, {12, 15, 14})).value == 15);
    CHECK(frames_to_event(frames(Method::ClassLevel, {1, 2, 2})).value == 2);
    CHECK(frames_to_event(frames(Method::ClassLevel, {1, 2})).value == 2);
    CHECK(frames_to_event(frames(Method::ClassLevel, {3, 0, 1})).value == 1);
    const auto ev = frames_to_event(frames(Method::SegRatio, {0.1}, "x", "cam"));
    CHECK(ev == EventFeature{"x", "cam", Method::SegRatio, 0.1});

    CHECK_THROWS_AS(frames_to_event({}), ValidationError);
    CHECK_THROWS_AS(frames_to_event(frames(Method::DetCount, {1, 2, 3, 4})), ValidationError);
    auto mixed = frames(Method::DetCount, {1, 2});
    mixed[1].camera = "other";
    CHECK_THROWS_AS(frames_to_event(mixed), ValidationError);
}

TEST_CASE("events to bin")
{
    CHECK(events_to_bin(std::vector<double>{10, 20}, Method::DetCount) == 15.0);
    CHECK(events_to_bin(std::vector<double>{42}, Method::SegCalibrated) == 42.0);
    CHECK(events_to_bin(std::vector<double>{0, 3}, Method::ClassLevel) == 3.0);
    CHECK(events_to_bin(std::vector<double>{0, 3, 1, 1}, Method::ClassLevel) == 1.0);
    CHECK_THROWS_AS(events_to_bin(std::vector<double>{}, Method::DetCount), ValidationError);
}

TEST_CASE("ground truth bin mean")
{
    CHECK(ground_truth_bin_mean(std::vector{arrival("a", "2024-06-03T08:00:00Z", 100),
                                            arrival("b", "2024-06-03T08:05:00Z", 300)}) == 200);
    CHECK(ground_truth_bin_mean(std::vector{arrival("a", "2024-06-03T08:00:00Z", 231.5)}) == 231.5);
    CHECK(ground_truth_bin_mean(std::vector{arrival("a", "2024-06-03T08:00:00Z", 0),
                                            arrival("b", "2024-06-03T08:01:00Z", 0),
                                            arrival("c", "2024-06-03T08:02:00Z", 0)}) == 0);
    CHECK_THROWS_AS(ground_truth_bin_mean(std::span<const ArrivalEvent>{}), ValidationError);
}

TEST_CASE("aggregation properties")
{
    Rng rng(31);
    for (int t = 0; t < 300; ++t) {
        const std::size_t n = 1 + rng.below(3);
        std::vector<double> values;
        for (std::size_t i = 0; i < n; ++i) values.push_back(std::round(rng.uniform(0, 100) * 8) / 8);
        auto f = frames(Method::DetCount, values);
        const double mx = frames_to_event(f).value;
        CHECK(std::find(values.begin(), values.end(), mx) != values.end());
        for (double v : values) CHECK(mx >= v);
        for (std::size_t drop = 0; drop < n && n > 1; ++drop) {
            auto fewer = f;
            fewer.erase(fewer.begin() + static_cast<long>(drop));
            CHECK(frames_to_event(fewer).value <= mx);
        }
        std::reverse(f.begin(), f.end());
        CHECK(frames_to_event(f).value == mx);

        std::vector<double> levels;
        for (std::size_t i = 0; i < n; ++i) levels.push_back(static_cast<double>(rng.below(4)));
        auto lf = frames(Method::ClassLevel, levels);
        const double med = frames_to_event(lf).value;
        std::rotate(lf.begin(), lf.begin() + 1, lf.end());
        CHECK(frames_to_event(lf).value == med);

        std::vector<double> bin;
        for (std::size_t i = 0, m = 1 + rng.below(30); i < m; ++i) bin.push_back(rng.uniform(0, 500));
        const double mean = events_to_bin(bin, Method::SegCalibrated);
        CHECK(mean >= *std::min_element(bin.begin(), bin.end()));
        CHECK(mean <= *std::max_element(bin.begin(), bin.end()));
        for (int k = 0; k < 5; ++k) {
            for (std::size_t i = bin.size() - 1; i > 0; --i) std::swap(bin[i], bin[rng.below(i + 1)]);
            CHECK(events_to_bin(bin, Method::SegCalibrated) == mean);
        }
    }
}

TEST_CASE("frames_to_events groups and sorts")
{
    auto all = frames(Method::DetCount, {3, 9, 4}, "e2", "b");
    for (const auto& f : frames(Method::DetCount, {7, 1}, "e1", "b")) all.push_back(f);
    for (const auto& f : frames(Method::DetCount, {5}, "e2", "a")) all.push_back(f);
    const auto ev = frames_to_events(all);
    REQUIRE(ev.size() == 3);
    CHECK(ev[0] == EventFeature{"e1", "b", Method::DetCount, 7});
    CHECK(ev[1] == EventFeature{"e2", "a", Method::DetCount, 5});
    CHECK(ev[2] == EventFeature{"e2", "b", Method::DetCount, 9});
    std::reverse(all.begin(), all.end());
    CHECK(frames_to_events(all) == ev);
}

TEST_CASE("bin keys follow the local clock")
{
    const auto k = bin_key(parse_rfc3339("2024-06-03T08:15:00-04:00"));
    CHECK(k.date == "2024-06-03");
    CHECK(k.bin_of_day == 33);
    CHECK(weekly_bin(k) == 33); // Monday
    const auto late = bin_key(parse_rfc3339("2024-06-09T23:59:59-04:00"));
    CHECK(late.date == "2024-06-09");
    CHECK(weekly_bin(late) == 671);
    CHECK(bin_key(parse_rfc3339("2024-06-04T03:00:00Z")).date == "2024-06-04");
}

TEST_CASE("events to bins")
{
    const std::vector<ArrivalEvent> events{
        arrival("a", "2024-06-03T08:00:00-04:00", 100), arrival("b", "2024-06-03T08:14:59-04:00", 300),
        arrival("c", "2024-06-03T08:15:00-04:00", 50), arrival("d", "2024-06-04T08:00:00-04:00", 7)};
    const std::map<EventId, double> values{{"a", 10}, {"b", 20}, {"c", 5}};
    const auto bins = events_to_bins(events, values, Method::DetCount);
    REQUIRE(bins.size() == 2); // d has no value, so its bin is absent
    CHECK(bins[0] == BinEntry{"P", {"2024-06-03", 32}, 15.0, 2});
    CHECK(bins[1] == BinEntry{"P", {"2024-06-03", 33}, 5.0, 1});

    const auto truth = ground_truth_bins(events);
    REQUIRE(truth.size() == 3);
    CHECK(truth[0].value == 200);
    CHECK(truth[2].key.date == "2024-06-04");

    auto shuffled = events;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(events_to_bins(shuffled, values, Method::DetCount) == bins);
    CHECK(ground_truth_bins(shuffled) == truth);
}

TEST_CASE("aggregation CSV round-trips")
{
    const std::vector<EventFeature> ev{{"e1", "a", Method::ClassLevel, 2}, {"e2", "a", Method::SegRatio, 0.125}};
    CHECK(read_event_features_csv(write_event_features_csv(ev)) == ev);
    CHECK_THROWS_AS(read_event_features_csv("event_id,camera,method,value\ne,c,det_count,nan\n"), FormatError);

    const std::map<EventId, double> est{{"a", 1.0 / 3.0}, {"b", -2}};
    CHECK(read_estimates_csv(write_estimates_csv(est)) == est);
    CHECK_THROWS_AS(read_estimates_csv("event_id,value\na,1\na,2\n"), FormatError);

    const std::vector<BinEntry> bins{{"P", {"2024-06-03", 0}, 1.5, 2}, {"P", {"2024-06-03", 95}, 0, 1}};
    CHECK(read_bins_csv(write_bins_csv(bins)) == bins);
    CHECK_THROWS_AS(read_bins_csv("platform,date,bin_of_day,value,n_events\nP,2024-06-03,96,1,1\n"), FormatError);
    CHECK_THROWS_AS(read_bins_csv("platform,date,bin_of_day,value,n_events\nP,2024-13-03,1,1,1\n"), FormatError);
    CHECK_THROWS_AS(read_bins_csv("platform,date,bin_of_day,value,n_events\nP,2024-06-03,1,1,0\n"), FormatError);
}
