#include "crowdcalib/error.hpp"
#include "crowdcalib/features.hpp"
#include "crowdcalib/random.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>

using namespace crowdcalib;
using namespace crowdcalib::features;

namespace {

DetectionBox box(double conf, int cls = 0) { return {10, 10, 4, 8, conf, cls}; }

} // namespace

TEST_CASE("detection_count examples")
{
    CHECK(detection_count({box(0.50), box(0.29), box(0.31)}, 0.30) == 2);
    CHECK(detection_count({}) == 0);
    CHECK(detection_count({box(0.9, 1), box(0.9, 1), box(0.9, 1)}) == 0);
    CHECK(detection_count({box(0.30)}) == 1); // threshold is inclusive
    CHECK(detection_count({box(0.9, 2), box(0.9, 0)}, 0.3, 2) == 1);
}

TEST_CASE("head_count examples")
{
    const std::vector<HeadPoint> five(5, HeadPoint{1, 1, 0.8});
    CHECK(head_count(five, 0.3) == 5);
    CHECK(head_count({{1, 1, 0.0}, {2, 2, 0.01}}, 0.0) == 2);
    CHECK(head_count({{1, 1, 0.1}, {2, 2, 0.9}}, 0.5) == 1);
}

TEST_CASE("counts are monotone in the threshold and order-free")
{
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
        std::vector<DetectionBox> boxes;
        std::vector<HeadPoint> points;
        for (std::size_t k = 0, n = rng.below(60); k < n; ++k) {
            boxes.push_back(box(rng.uniform(), static_cast<int>(rng.below(3))));
            points.push_back({rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform()});
        }
        std::size_t prev_d = boxes.size() + 1, prev_h = points.size() + 1;
        for (double c = 0.0; c <= 1.0; c += 0.05) {
            const auto d = detection_count(boxes, c);
            const auto h = head_count(points, c);
            CHECK(d <= prev_d);
            CHECK(h <= prev_h);
            prev_d = d;
            prev_h = h;
        }
        const auto d = detection_count(boxes), h = head_count(points);
        std::reverse(boxes.begin(), boxes.end());
        std::rotate(points.begin(), points.begin() + static_cast<long>(points.size() / 2), points.end());
        CHECK(detection_count(boxes) == d);
        CHECK(head_count(points) == h);
    }
}

TEST_CASE("seg_features examples")
{
    const GridMask full(10, 10, true);
    auto f = seg_features(GridMask(10, 10), full);
    CHECK(f.pixels == 0);
    CHECK(f.ratio == 0.0);

    GridMask m(10, 10);
    for (std::size_t r = 0; r < 5; ++r) m.fill_span(r, 0, 5);
    f = seg_features(m, full);
    CHECK(f.pixels == 25);
    CHECK(f.ratio == 0.25);

    f = seg_features(full, full);
    CHECK(f.pixels == 100);
    CHECK(f.ratio == 1.0);

    GridMask half(10, 10);
    for (std::size_t r = 0; r < 10; ++r) half.fill_span(r, 0, 2);
    f = seg_features(m, half);
    CHECK(f.pixels == 10);
    CHECK(f.ratio == 0.1);
    CHECK(seg_features(m, half, true).ratio == 0.5);
    CHECK(seg_features(m, GridMask(10, 10), true).ratio == 0.0);

    CHECK_THROWS_AS(seg_features(m, GridMask(10, 11)), ValidationError);
}

TEST_CASE("seg ratio is exactly pixels over area")
{
    Rng rng(22);
    for (int t = 0; t < 50; ++t) {
        const std::size_t rows = 1 + rng.below(50), cols = 1 + rng.below(80);
        GridMask m(rows, cols), a(rows, cols);
        std::size_t both = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const bool x = rng.uniform() < 0.5, y = rng.uniform() < 0.7;
                m.set(r, c, x);
                a.set(r, c, y);
                both += x && y;
            }
        }
        const auto f = seg_features(m, a);
        CHECK(f.pixels == both);
        CHECK(f.ratio == static_cast<double>(both) / static_cast<double>(rows * cols));
        CHECK(f.ratio >= 0.0);
        CHECK(f.ratio <= 1.0);
    }
}

TEST_CASE("class level from logits")
{
    CHECK(class_level_from_logits({5, 1, 0, 0}) == CrowdLevel::Empty);
    CHECK(class_level_from_logits({0, 0, 3, 3}) == CrowdLevel::High);
    CHECK(class_level_from_logits({-1, 2, 0, 0}) == CrowdLevel::Low);
    CHECK(class_level_from_logits({2, 2, 2, 1}) == CrowdLevel::Medium);
    CHECK_THROWS_AS(class_level_from_logits({0, NAN, 0, 0}), NumericalError);
    CHECK_THROWS_AS(class_level_from_logits({0, INFINITY, 0, 0}), NumericalError);
}

TEST_CASE("method names")
{
    for (auto m : {Method::DetCount, Method::HeadCount, Method::SegPixels, Method::SegRatio, Method::SegCalibrated,
                   Method::ClassLevel}) {
        CHECK(parse_method(to_string(m)) == m);
    }
    CHECK(parse_method("DET_COUNT") == Method::DetCount);
    CHECK_THROWS_AS(parse_method("pixels"), ValidationError);
    CHECK(is_ordinal(Method::ClassLevel));
    CHECK_FALSE(is_ordinal(Method::SegRatio));
}

TEST_CASE("extract dispatches on payload kind")
{
    GridMask mask(4, 4);
    mask.fill_span(0, 0, 4);
    mask.set(3, 3, true);
    const FrameObservation seg{"c", "e", 5, mask};
    const FrameObservation det{"c", "e", 0, std::vector<DetectionBox>{box(0.9), box(0.1)}};
    const FrameObservation pts{"c", "e", -5, std::vector<HeadPoint>{{1, 1, 0.9}}};
    const FrameObservation cls{"c", "e", 0, ClassLogits{0, 0, 1, 0}};

    ExtractOptions opt;
    FrameFeature f;
    CHECK(extract(det, Method::DetCount, opt, f));
    CHECK(f.value == 1);
    CHECK(f.camera == "c");
    CHECK_FALSE(extract(det, Method::SegRatio, opt, f));
    CHECK(extract(pts, Method::HeadCount, opt, f));
    CHECK(f.offset_s == -5);
    CHECK(extract(cls, Method::ClassLevel, opt, f));
    CHECK(f.value == 2);

    CHECK(extract(seg, Method::SegPixels, opt, f));
    CHECK(f.value == 5); // no AOI: full frame
    GridMask aoi(4, 4);
    aoi.fill_span(0, 0, 2);
    opt.aoi["c"] = aoi;
    CHECK(extract(seg, Method::SegPixels, opt, f));
    CHECK(f.value == 2);
    CHECK(extract(seg, Method::SegRatio, opt, f));
    CHECK(f.value == 2.0 / 16.0);

    CHECK_THROWS_AS(extract(seg, Method::SegCalibrated, opt, f), ValidationError);
    WeightMap w;
    w.camera = "c";
    w.prows = 2;
    w.pcols = 2;
    w.p = 2;
    w.q = 2;
    w.lambda = 1;
    w.pool_mode = PoolMode::Mean;
    w.values = {4, -8, 1, -8};
    opt.weight_maps["c"] = w;
    CHECK(extract(seg, Method::SegCalibrated, opt, f));
    CHECK(f.value == 0.5 * 4 - 0.5 * 8 - 0.25 * 8); // block means 0.5, 0.5, 0, 0.25
    opt.clamp_nonnegative = true;
    CHECK(extract(seg, Method::SegCalibrated, opt, f));
    CHECK(f.value == 0.0);
}

TEST_CASE("extract_all and CSV round-trip")
{
    ArrivalEvent e;
    e.event_id = "e1";
    e.platform = "P";
    e.frames = {{"a", "e1", -5, std::vector<DetectionBox>{box(0.9)}},
                {"a", "e1", 0, std::vector<DetectionBox>{box(0.9), box(0.8)}},
                {"b", "e1", 0, ClassLogits{1, 0, 0, 0}}};
    const auto feats = extract_all({e}, Method::DetCount, {});
    REQUIRE(feats.size() == 2);
    CHECK(feats[1].value == 2);
    CHECK(read_features_csv(write_features_csv(feats)) == feats);

    CHECK_THROWS_AS(read_features_csv("event_id,camera,offset_s,method,value\ne,c,3,det_count,1\n"), FormatError);
    CHECK_THROWS_AS(read_features_csv("event_id,camera,offset_s,method,value\ne,c,0,pixels,1\n"), FormatError);
    CHECK_THROWS_AS(read_features_csv("event_id,camera,offset_s,method,value\ne,c,0,det_count,inf\n"), FormatError);
    CHECK_THROWS_AS(read_features_csv("event_id,camera\n"), FormatError);
}
