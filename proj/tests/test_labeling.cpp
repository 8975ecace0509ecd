#include "crowdcalib/error.hpp"
#include "crowdcalib/labeling.hpp"
#include "crowdcalib/random.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace crowdcalib;
using namespace crowdcalib::labeling;

namespace {

// Linear-interpolation percentile on a sorted copy, computed independently.
double oracle_percentile(std::vector<double> v, double f)
{
    std::sort(v.begin(), v.end());
    const long double h = static_cast<long double>(v.size() - 1) * f;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return static_cast<double>(v[lo] + (h - lo) * (static_cast<long double>(v[hi]) - v[lo]));
}

ArrivalEvent event(const std::string& id, double occupancy, const std::string& platform = "P")
{
    ArrivalEvent e;
    e.event_id = id;
    e.platform = platform;
    e.occupancy = occupancy;
    return e;
}

std::map<EventId, CrowdLevel> labels_with_counts(std::array<std::size_t, 4> counts)
{
    std::map<EventId, CrowdLevel> labels;
    for (std::size_t cls = 0; cls < 4; ++cls) {
        for (std::size_t i = 0; i < counts[cls]; ++i) {
            labels["e" + std::to_string(cls) + "_" + std::to_string(i)] = static_cast<CrowdLevel>(cls);
        }
    }
    return labels;
}

} // namespace

TEST_CASE("fit_scheme drops zeros")
{
    const std::vector<double> v{0, 0, 10, 10, 10, 10};
    const auto s = fit_scheme(v, "P");
    CHECK(s.t50 == 10);
    CHECK(s.t75 == 10);
    CHECK(s.t98 == 10);
}

TEST_CASE("fit_scheme on 1..100")
{
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    const auto s = fit_scheme(v, "P");
    CHECK(s.t50 == doctest::Approx(50.5).epsilon(1e-14));
    CHECK(s.t75 == doctest::Approx(75.25).epsilon(1e-14));
    CHECK(s.t98 == doctest::Approx(98.02).epsilon(1e-14));
}

TEST_CASE("fit_scheme errors")
{
    CHECK_THROWS_AS(fit_scheme(std::vector<double>{0, 5}, "P"), ValidationError);
    CHECK_THROWS_AS(fit_scheme(std::vector<double>{}, "P"), ValidationError);
    CHECK_THROWS_AS(fit_scheme(std::vector<double>{1, 2, -1}, "P"), ValidationError);
    CHECK_THROWS_AS(fit_scheme(std::vector<double>{1, 2, NAN}, "P"), ValidationError);
}

TEST_CASE("fit_scheme matches the percentile oracle and stays ordered")
{
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v;
        const std::size_t n = 2 + rng.below(300);
        for (std::size_t i = 0; i < n; ++i) {
            v.push_back(rng.uniform() < 0.2 ? 0.0 : std::round(rng.uniform(0, 400) * 4) / 4);
        }
        std::vector<double> positive;
        for (double x : v) {
            if (x > 0) positive.push_back(x);
        }
        if (positive.size() < 2) {
            CHECK_THROWS_AS(fit_scheme(v, "P"), ValidationError);
            continue;
        }
        const auto s = fit_scheme(v, "P");
        CHECK(s.t50 <= s.t75);
        CHECK(s.t75 <= s.t98);
        CHECK(s.t50 == doctest::Approx(oracle_percentile(positive, 0.50)).epsilon(1e-12));
        CHECK(s.t75 == doctest::Approx(oracle_percentile(positive, 0.75)).epsilon(1e-12));
        CHECK(s.t98 == doctest::Approx(oracle_percentile(positive, 0.98)).epsilon(1e-12));
    }
}

TEST_CASE("label_events uses closed upper bounds")
{
    const CrowdLevelScheme s{"P", 10, 20, 30};
    const auto labels = label_events({event("a", 0), event("b", 30), event("c", 30.5), event("d", 10), event("e", 10.1)}, s);
    CHECK(labels.at("a") == CrowdLevel::Empty);
    CHECK(labels.at("b") == CrowdLevel::Medium);
    CHECK(labels.at("c") == CrowdLevel::High);
    CHECK(labels.at("d") == CrowdLevel::Empty);
    CHECK(labels.at("e") == CrowdLevel::Low);
    CHECK_THROWS_AS(label_events({event("x", 1, "Q")}, s), ValidationError);
}

TEST_CASE("split of 10 per class at 0.9")
{
    const auto split = stratified_split(labels_with_counts({10, 10, 10, 10}), 0.9, 3);
    for (int cls = 0; cls < 4; ++cls) {
        std::size_t train = 0;
        for (const auto& id : split.train_event_ids) train += id.starts_with("e" + std::to_string(cls) + "_");
        CHECK(train == 9);
    }
    CHECK(split.test_event_ids.size() == 4);
}

TEST_CASE("single-event class goes to train with a warning")
{
    testing::WarningCapture warnings;
    const auto split = stratified_split(labels_with_counts({0, 1, 0, 0}), 0.9, 0);
    CHECK(split.train_event_ids.size() == 1);
    CHECK(split.test_event_ids.empty());
    CHECK(warnings.contains("no test events"));
}

TEST_CASE("split ratio must be inside (0,1)")
{
    const auto labels = labels_with_counts({3, 3, 3, 3});
    CHECK_THROWS_AS(stratified_split(labels, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(stratified_split(labels, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(stratified_split(labels, NAN, 1), ValidationError);
}

TEST_CASE("split properties")
{
    testing::WarningCapture warnings;
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        std::array<std::size_t, 4> counts{};
        for (auto& c : counts) c = rng.below(40);
        const auto labels = labels_with_counts(counts);
        if (labels.empty()) continue;
        const double ratio = rng.uniform(0.05, 0.95);
        const std::uint64_t seed = rng.next();
        const auto split = stratified_split(labels, ratio, seed);

        // disjoint and covering
        CHECK(split.train_event_ids.size() + split.test_event_ids.size() == labels.size());
        for (const auto& id : split.train_event_ids) CHECK(split.test_event_ids.count(id) == 0);

        for (std::size_t cls = 0; cls < 4; ++cls) {
            if (counts[cls] == 0) continue;
            std::size_t train = 0;
            for (const auto& id : split.train_event_ids) train += id.starts_with("e" + std::to_string(cls) + "_");
            const double share = static_cast<double>(train) / static_cast<double>(counts[cls]);
            if (ratio * counts[cls] >= 0.5) { // otherwise the one-train-sample floor applies
                CHECK(std::abs(share - ratio) <= 1.0 / counts[cls] + 1e-12);
            } else {
                CHECK(train == 1);
            }
        }
        CHECK(stratified_split(labels, ratio, seed) == split);
    }
}

TEST_CASE("split depends on the seed but not on insertion order")
{
    const auto labels = labels_with_counts({30, 30, 30, 30});
    std::vector<std::pair<EventId, CrowdLevel>> reversed(labels.rbegin(), labels.rend());
    std::map<EventId, CrowdLevel> rebuilt;
    for (const auto& [id, lvl] : reversed) rebuilt.emplace(id, lvl);
    CHECK(stratified_split(rebuilt, 0.7, 9) == stratified_split(labels, 0.7, 9));
    CHECK(stratified_split(labels, 0.7, 9).train_event_ids != stratified_split(labels, 0.7, 10).train_event_ids);
}

TEST_CASE("label, scheme and split CSV round-trips")
{
    const std::vector<CrowdLevelScheme> schemes{{"A", 1.5, 2, 3}, {"B", 0, 0, 0.1}};
    CHECK(read_scheme_csv(write_scheme_csv(schemes)) == schemes);
    CHECK_THROWS_AS(read_scheme_csv("platform,t50,t75,t98\nA,3,2,1\n"), FormatError);
    CHECK_THROWS_AS(read_scheme_csv("platform,t50\n"), FormatError);

    const auto labels = labels_with_counts({2, 1, 1, 3});
    CHECK(read_labels_csv(write_labels_csv(labels)) == labels);
    CHECK_THROWS_AS(read_labels_csv("event_id,level\na,EMPTY\na,LOW\n"), FormatError);
    CHECK_THROWS_AS(read_labels_csv("event_id,level\na,HUGE\n"), FormatError);

    testing::WarningCapture warnings;
    auto split = stratified_split(labels, 0.5, 1);
    split.seed = 0;
    CHECK(read_split_csv(write_split_csv(split)) == split);
    CHECK_THROWS_AS(read_split_csv("event_id,split\na,train\na,test\n"), FormatError);
    CHECK_THROWS_AS(read_split_csv("event_id,split\na,validation\n"), FormatError);
    SplitAssignment both;
    both.train_event_ids = {"a"};
    both.test_event_ids = {"a"};
    CHECK_THROWS_AS(write_split_csv(both), ValidationError);
}
