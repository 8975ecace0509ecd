#include "crowdcalib/error.hpp"
#include "crowdcalib/features.hpp"
#include "crowdcalib/ingest.hpp"
#include "crowdcalib/synth.hpp"
#include "crowdcalib/text_io.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <map>

using namespace crowdcalib;
using namespace crowdcalib::synth;

namespace {

SynthConfig small_config()
{
    SynthConfig c;
    c.rows = 72;
    c.cols = 128;
    c.person_area = 40;
    c.occupancy_min = 0;
    c.occupancy_max = 25;
    c.n_events = 12;
    c.seed = 77;
    return c;
}

std::map<std::string, std::string> tree_contents(const std::filesystem::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            out[std::filesystem::relative(entry.path(), dir).string()] = text::read_file(entry.path());
        }
    }
    return out;
}

} // namespace

TEST_CASE("occupancy-0 events are empty")
{
    auto c = small_config();
    c.occupancy_min = 0;
    c.occupancy_max = 0;
    c.emit_logits = false;
    const SceneGenerator gen(c);
    const auto e = gen.event(0);
    CHECK(e.occupancy == 0);
    REQUIRE(e.frames.size() == 9); // 3 offsets x (mask, boxes, points)
    for (const auto& f : e.frames) {
        if (f.kind() == PayloadKind::Mask) CHECK(std::get<GridMask>(f.payload).popcount() == 0);
        if (f.kind() == PayloadKind::Boxes) CHECK(std::get<std::vector<DetectionBox>>(f.payload).empty());
        if (f.kind() == PayloadKind::Points) CHECK(std::get<std::vector<HeadPoint>>(f.payload).empty());
    }
}

TEST_CASE("same seed gives identical files")
{
    testing::TempDir a("synth_a"), b("synth_b"), d("synth_d");
    auto c = small_config();
    c.n_cameras = 2;
    c.camera_dropout = 0.3;
    write_synthetic_dataset(c, a.path());
    write_synthetic_dataset(c, b.path());
    const auto first = tree_contents(a.path());
    CHECK(first.size() > 10);
    CHECK(first == tree_contents(b.path()));
    c.seed += 1;
    write_synthetic_dataset(c, d.path());
    CHECK(first != tree_contents(d.path()));
}

TEST_CASE("one box per person without misses")
{
    auto c = small_config();
    c.n_cameras = 2;
    const auto ds = generate(c);
    for (const auto& e : ds.events) {
        for (const auto& f : e.frames) {
            if (f.kind() == PayloadKind::Boxes) {
                CHECK(features::detection_count(std::get<std::vector<DetectionBox>>(f.payload)) == e.occupancy);
            }
            if (f.kind() == PayloadKind::Points) {
                CHECK(features::head_count(std::get<std::vector<HeadPoint>>(f.payload)) == e.occupancy);
            }
        }
    }
}

TEST_CASE("misses only ever remove boxes")
{
    auto c = small_config();
    c.miss_rate = 0.3;
    c.overlap_factor = 1.0;
    c.n_events = 30;
    const auto ds = generate(c);
    std::size_t total = 0, boxes = 0;
    for (const auto& e : ds.events) {
        for (const auto& f : e.frames) {
            if (f.kind() != PayloadKind::Boxes) continue;
            const auto n = std::get<std::vector<DetectionBox>>(f.payload).size();
            CHECK(n <= e.occupancy);
            boxes += n;
            total += static_cast<std::size_t>(e.occupancy);
        }
    }
    CHECK(boxes < total);
}

TEST_CASE("logits follow the generated crowd level")
{
    auto c = small_config();
    c.logit_noise = 0.0;
    c.n_events = 40;
    const SceneGenerator gen(c);
    REQUIRE(gen.scheme().has_value());
    for (std::size_t i = 0; i < gen.event_count(); ++i) {
        const auto e = gen.event(i);
        for (const auto& f : e.frames) {
            if (f.kind() != PayloadKind::Logits) continue;
            CHECK(features::class_level_from_logits(std::get<ClassLogits>(f.payload)) ==
                  crowd_level(e.occupancy, *gen.scheme()));
        }
    }
}

TEST_CASE("blobs shrink with depth")
{
    auto c = small_config();
    c.rows = 216;
    c.cols = 384;
    c.person_area = 300;
    c.depth_scale = 0.2;
    const SceneGenerator gen(c);
    const auto poly = c.effective_polygon();
    const double cx = std::round(c.cols / 2.0);
    std::size_t previous = SIZE_MAX;
    // start low enough that no blob is cut off by the image border
    const double start = std::floor(c.rows - 1 - gen.blob_at(cx, poly.near_y).b);
    for (double y = start; y >= poly.far_y; y -= 3) {
        const auto count = render_blobs({gen.blob_at(cx, y)}, c.rows, c.cols).popcount();
        CHECK(count <= previous);
        previous = count;
    }
    CHECK(gen.area_scale(poly.near_y) == 1.0);
    CHECK(gen.area_scale(poly.far_y) == doctest::Approx(0.2));
    CHECK(gen.depth(poly.far_y) == 1.0);
}

TEST_CASE("rendered blob area tracks the configured person area")
{
    auto c = small_config();
    c.rows = 400;
    c.cols = 400;
    c.person_area = 2000;
    const SceneGenerator gen(c);
    const auto blob = gen.blob_at(200, c.effective_polygon().near_y - 60);
    const double expected = 3.14159265358979 * blob.a * blob.b;
    const double got = static_cast<double>(render_blobs({blob}, c.rows, c.cols).popcount());
    CHECK(got == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("written datasets pass ingest")
{
    testing::TempDir dir("synth_ingest");
    auto c = small_config();
    c.n_cameras = 3;
    c.camera_dropout = 0.2;
    write_synthetic_dataset(c, dir.path());
    testing::WarningCapture warnings;
    const auto ds = ingest::load_dataset(dir.path(), {.load_masks = true});
    const auto mem = generate(c);
    REQUIRE(ds.events.size() == mem.events.size());
    CHECK(ds.platform_config.cameras == mem.platform_config.cameras);
    CHECK(ds.scheme == mem.scheme);
    for (std::size_t i = 0; i < ds.events.size(); ++i) {
        CHECK(ds.events[i].event_id == mem.events[i].event_id);
        CHECK(ds.events[i].occupancy == mem.events[i].occupancy);
        CHECK(ds.events[i].frames.size() == mem.events[i].frames.size());
        CHECK_NOTHROW(ds.events[i].validate());
    }
}

TEST_CASE("config validation")
{
    auto c = small_config();
    c.person_area = 1e6;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config();
    c.depth_scale = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config();
    c.occupancy_min = 5;
    c.occupancy_max = 4;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config();
    c.miss_rate = 1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config();
    c.polygon = Trapezoid{10, 20, 30, 500, 0, 100};
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("config JSON")
{
    auto c = small_config();
    c.polygon = Trapezoid{20, 40, 80, 70, 5, 120};
    c.emit_points = false;
    const auto back = read_synth_config(write_synth_config(c));
    CHECK(write_synth_config(back) == write_synth_config(c));
    CHECK(back.polygon.has_value());
    CHECK(back.emit_points == false);

    const auto partial = read_synth_config(R"({"n_events": 5, "seed": 9})");
    CHECK(partial.n_events == 5);
    CHECK(partial.rows == SynthConfig{}.rows);
    CHECK_THROWS_AS(read_synth_config(R"({"n_event": 5})"), FormatError);
    CHECK_THROWS_AS(read_synth_config("[1]"), FormatError);
    CHECK_THROWS_AS(read_synth_config("{"), FormatError);
}
