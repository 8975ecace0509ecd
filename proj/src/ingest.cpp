#include "crowdcalib/ingest.hpp"

#include "crowdcalib/error.hpp"
#include "crowdcalib/labeling.hpp"
#include "crowdcalib/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace crowdcalib::ingest {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

namespace {

class PgmCursor {
public:
    explicit PgmCursor(std::string_view bytes) : bytes_(bytes) {}

    std::size_t pos() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ >= bytes_.size(); }
    unsigned char peek() const { return static_cast<unsigned char>(bytes_[pos_]); }
    std::string_view rest() const { return bytes_.substr(pos_); }
    void advance(std::size_t n) { pos_ += n; }

    [[noreturn]] void fail(const std::string& why) const
    {
        throw FormatError("PGM: " + why + " at byte " + std::to_string(pos_), pos_);
    }

    static bool is_space(unsigned char ch) noexcept
    {
        return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f';
    }

    void skip_space_and_comments()
    {
        while (!at_end()) {
            const unsigned char ch = peek();
            if (is_space(ch)) {
                ++pos_;
            } else if (ch == '#') {
                while (!at_end() && peek() != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t read_uint(const char* what)
    {
        skip_space_and_comments();
        if (at_end()) fail(std::string("unexpected end of data reading ") + what);
        if (peek() < '0' || peek() > '9') fail(std::string("expected ") + what);
        std::size_t v = 0;
        while (!at_end() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + static_cast<std::size_t>(peek() - '0');
            if (v > (std::size_t{1} << 40)) fail(std::string(what) + " too large");
            ++pos_;
        }
        return v;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

GridMask read_mask_pgm(std::string_view bytes)
{
    PgmCursor cur(bytes);
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
        cur.fail("expected magic P5 or P2");
    }
    const bool binary = bytes[1] == '5';
    cur.advance(2);
    if (cur.at_end() || !PgmCursor::is_space(cur.peek())) cur.fail("expected whitespace after magic");
    const std::size_t width = cur.read_uint("width");
    const std::size_t height = cur.read_uint("height");
    const std::size_t maxval = cur.read_uint("maxval");
    if (width == 0 || height == 0) cur.fail("zero image dimension");
    if (maxval == 0 || maxval > 65535) cur.fail("maxval must be in 1..65535");

    GridMask mask(height, width);
    if (binary) {
        if (cur.at_end() || !PgmCursor::is_space(cur.peek())) cur.fail("expected single whitespace before raster");
        cur.advance(1);
        const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
        const std::size_t need = width * height * sample_bytes;
        const std::string_view raster = cur.rest();
        if (raster.size() < need) {
            cur.advance(raster.size());
            cur.fail("truncated raster (" + std::to_string(raster.size()) + " of " + std::to_string(need) +
                     " bytes)");
        }
        if (raster.size() > need) {
            cur.advance(need);
            cur.fail("trailing bytes after raster");
        }
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                const std::size_t i = (r * width + c) * sample_bytes;
                unsigned value = static_cast<unsigned char>(raster[i]);
                if (sample_bytes == 2) value = (value << 8) | static_cast<unsigned char>(raster[i + 1]);
                if (value > maxval) {
                    cur.advance(i);
                    cur.fail("sample exceeds maxval");
                }
                if (value != 0) mask.set(r, c, true);
            }
        }
    } else {
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                const std::size_t value = cur.read_uint("sample");
                if (value > maxval) cur.fail("sample exceeds maxval");
                if (value != 0) mask.set(r, c, true);
            }
        }
        cur.skip_space_and_comments();
        if (!cur.at_end()) cur.fail("trailing data after raster");
    }
    return mask;
}

std::string write_mask_pgm(const GridMask& mask)
{
    if (mask.empty()) {
        throw ValidationError("write_mask_pgm: empty mask");
    }
    std::string out = "P5\n" + std::to_string(mask.cols()) + " " + std::to_string(mask.rows()) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + mask.size(), '\0');
    for (std::size_t r = 0; r < mask.rows(); ++r) {
        for (std::size_t c = 0; c < mask.cols(); ++c) {
            if (mask.get(r, c)) out[header + r * mask.cols() + c] = static_cast<char>(255);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSONL observations
// ---------------------------------------------------------------------------

namespace {

FormatError line_error(std::size_t line, const std::string& why)
{
    return FormatError("observations line " + std::to_string(line) + ": " + why, line);
}

double number_field(const json& obj, const char* key, std::size_t line)
{
    const auto it = obj.find(key);
    if (it == obj.end()) throw line_error(line, std::string("missing field '") + key + "'");
    if (!it->is_number()) throw line_error(line, std::string("field '") + key + "' is not a number");
    return it->get<double>();
}

double conf_field(const json& obj, std::size_t line)
{
    const double conf = number_field(obj, "conf", line);
    if (!(conf >= 0.0 && conf <= 1.0)) throw line_error(line, "conf outside [0,1]");
    return conf;
}

std::string string_field(const json& obj, const char* key, std::size_t line)
{
    const auto it = obj.find(key);
    if (it == obj.end()) throw line_error(line, std::string("missing field '") + key + "'");
    if (!it->is_string()) throw line_error(line, std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
}

FrameObservation parse_observation(const json& obj, std::size_t line)
{
    if (!obj.is_object()) throw line_error(line, "record is not a JSON object");
    FrameObservation obs;
    obs.camera = string_field(obj, "camera", line);
    obs.event_id = string_field(obj, "event_id", line);
    const auto off = obj.find("offset_s");
    if (off == obj.end()) throw line_error(line, "missing field 'offset_s'");
    if (!off->is_number_integer()) throw line_error(line, "field 'offset_s' is not an integer");
    const auto offset = off->get<long long>();
    if (offset != -5 && offset != 0 && offset != 5) {
        throw line_error(line, "offset_s must be -5, 0 or 5 (got " + std::to_string(offset) + ")");
    }
    obs.offset_s = static_cast<int>(offset);

    const int payloads = static_cast<int>(obj.contains("boxes")) + static_cast<int>(obj.contains("points")) +
                         static_cast<int>(obj.contains("class_logits"));
    if (payloads != 1) {
        throw line_error(line, "exactly one of 'boxes', 'points', 'class_logits' is required");
    }
    if (const auto it = obj.find("boxes"); it != obj.end()) {
        if (!it->is_array()) throw line_error(line, "'boxes' is not an array");
        std::vector<DetectionBox> boxes;
        for (const auto& b : *it) {
            if (!b.is_object()) throw line_error(line, "box is not an object");
            DetectionBox box;
            box.cx = number_field(b, "cx", line);
            box.cy = number_field(b, "cy", line);
            box.w = number_field(b, "w", line);
            box.h = number_field(b, "h", line);
            box.conf = conf_field(b, line);
            const auto cls = b.find("class_id");
            if (cls == b.end()) throw line_error(line, "missing field 'class_id'");
            if (!cls->is_number_integer() || cls->get<long long>() < 0) {
                throw line_error(line, "class_id must be a nonnegative integer");
            }
            box.class_id = cls->get<int>();
            if (!(box.w > 0.0) || !(box.h > 0.0)) throw line_error(line, "box w and h must be positive");
            boxes.push_back(box);
        }
        obs.payload = std::move(boxes);
    } else if (const auto pit = obj.find("points"); pit != obj.end()) {
        if (!pit->is_array()) throw line_error(line, "'points' is not an array");
        std::vector<HeadPoint> points;
        for (const auto& p : *pit) {
            if (!p.is_object()) throw line_error(line, "point is not an object");
            points.push_back(HeadPoint{number_field(p, "x", line), number_field(p, "y", line), conf_field(p, line)});
        }
        obs.payload = std::move(points);
    } else {
        const auto& lg = obj.at("class_logits");
        if (!lg.is_array() || lg.size() != 4) throw line_error(line, "'class_logits' must be an array of 4 numbers");
        ClassLogits logits{};
        for (std::size_t i = 0; i < 4; ++i) {
            if (!lg[i].is_number()) throw line_error(line, "'class_logits' must be an array of 4 numbers");
            logits[i] = lg[i].get<double>();
            if (!std::isfinite(logits[i])) throw line_error(line, "non-finite logit");
        }
        obs.payload = logits;
    }
    return obs;
}

} // namespace

std::vector<FrameObservation> read_detections_jsonl(std::string_view text)
{
    std::vector<FrameObservation> out;
    const auto all = text::lines(text);
    for (std::size_t i = 0; i < all.size(); ++i) {
        const std::size_t line = i + 1;
        if (text::split_ws(all[i]).empty()) continue;
        json obj;
        try {
            obj = json::parse(all[i]);
        } catch (const json::parse_error& e) {
            throw line_error(line, std::string("invalid JSON: ") + e.what());
        }
        out.push_back(parse_observation(obj, line));
    }
    return out;
}

std::string write_detections_jsonl(const std::vector<FrameObservation>& frames)
{
    std::string out;
    for (const auto& f : frames) {
        json obj;
        obj["camera"] = f.camera;
        obj["event_id"] = f.event_id;
        obj["offset_s"] = f.offset_s;
        switch (f.kind()) {
        case PayloadKind::Mask:
            throw ValidationError("write_detections_jsonl: mask payloads are stored as PGM files");
        case PayloadKind::Boxes: {
            json arr = json::array();
            for (const auto& b : std::get<std::vector<DetectionBox>>(f.payload)) {
                arr.push_back({{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}, {"conf", b.conf},
                               {"class_id", b.class_id}});
            }
            obj["boxes"] = std::move(arr);
            break;
        }
        case PayloadKind::Points: {
            json arr = json::array();
            for (const auto& p : std::get<std::vector<HeadPoint>>(f.payload)) {
                arr.push_back({{"x", p.x}, {"y", p.y}, {"conf", p.conf}});
            }
            obj["points"] = std::move(arr);
            break;
        }
        case PayloadKind::Logits: {
            const auto& l = std::get<ClassLogits>(f.payload);
            obj["class_logits"] = json::array({l[0], l[1], l[2], l[3]});
            break;
        }
        }
        out += obj.dump();
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ground truth CSV
// ---------------------------------------------------------------------------

EventId default_event_id(const PlatformId& platform, const Timestamp& arrival_time)
{
    const LocalTime lt = to_local(arrival_time, arrival_time.offset);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d%02d%02d", lt.year, lt.month, lt.day, lt.hour, lt.minute,
                  lt.second);
    return platform + "_" + buf;
}

std::vector<OccupancyRecord> read_occupancy_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty()) throw FormatError("ground truth: missing header row", 1);
    const auto header = text::split_csv(all[0]);
    const bool with_id = header.size() == 4;
    if (header.size() < 3 || header.size() > 4 || header[0] != "platform" || header[1] != "arrival_time" ||
        header[2] != "occupancy" || (with_id && header[3] != "event_id")) {
        throw FormatError("ground truth row 1: expected header platform,arrival_time,occupancy[,event_id]", 1);
    }
    std::vector<OccupancyRecord> out;
    std::set<std::pair<PlatformId, std::int64_t>> seen;
    std::set<EventId> ids;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != header.size()) {
            throw FormatError("ground truth row " + std::to_string(row) + ": expected " +
                                  std::to_string(header.size()) + " fields",
                              row);
        }
        OccupancyRecord rec;
        rec.platform = std::string(f[0]);
        if (rec.platform.empty()) throw FormatError("ground truth row " + std::to_string(row) + ": empty platform", row);
        try {
            rec.arrival_time = parse_rfc3339(f[1]);
        } catch (const FormatError& e) {
            throw FormatError("ground truth row " + std::to_string(row) + ": " + e.what(), row);
        }
        rec.arrival_time_text = std::string(f[1]);
        rec.occupancy = text::parse_double(f[2], "occupancy", row);
        if (!(rec.occupancy >= 0.0) || !std::isfinite(rec.occupancy)) {
            throw FormatError("ground truth row " + std::to_string(row) + ": occupancy must be nonnegative", row);
        }
        rec.event_id = with_id ? std::string(f[3]) : default_event_id(rec.platform, rec.arrival_time);
        if (rec.event_id.empty()) throw FormatError("ground truth row " + std::to_string(row) + ": empty event_id", row);
        if (!seen.emplace(rec.platform, rec.arrival_time.utc_seconds).second) {
            throw FormatError("ground truth row " + std::to_string(row) + ": duplicate arrival " + rec.platform + " " +
                                  rec.arrival_time_text + " is ambiguous",
                              row);
        }
        if (!ids.insert(rec.event_id).second) {
            throw FormatError("ground truth row " + std::to_string(row) + ": duplicate event_id " + rec.event_id, row);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::string write_occupancy_csv(const std::vector<OccupancyRecord>& records)
{
    std::string out = "platform,arrival_time,occupancy,event_id\n";
    for (const auto& r : records) {
        text::check_identifier(r.platform, "platform");
        text::check_identifier(r.event_id, "event_id");
        const std::string when = r.arrival_time_text.empty() ? format_rfc3339(r.arrival_time) : r.arrival_time_text;
        out += r.platform + "," + when + "," + text::format_double(r.occupancy) + "," + r.event_id + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Weekly stats CSV
// ---------------------------------------------------------------------------

std::map<PlatformId, WeeklyBinStats> read_weekly_stats_csv(std::string_view content)
{
    const auto all = text::lines(content);
    if (all.empty() || all[0] != "platform,bin_index,mu,sigma") {
        throw FormatError("weekly stats row 1: expected header platform,bin_index,mu,sigma", 1);
    }
    std::map<PlatformId, WeeklyBinStats> out;
    std::map<PlatformId, std::vector<bool>> seen;
    for (std::size_t i = 1; i < all.size(); ++i) {
        const std::size_t row = i + 1;
        if (all[i].empty()) continue;
        const auto f = text::split_csv(all[i]);
        if (f.size() != 4) throw FormatError("weekly stats row " + std::to_string(row) + ": expected 4 fields", row);
        const PlatformId platform(f[0]);
        const long long bin = text::parse_int(f[1], "bin_index", row);
        if (bin < 0 || bin >= kWeeklyBins) {
            throw FormatError("weekly stats row " + std::to_string(row) + ": bin_index outside 0..671", row);
        }
        const double mu = text::parse_double(f[2], "mu", row);
        const double sigma = text::parse_double(f[3], "sigma", row);
        if (!(mu >= 0.0) || !(sigma >= 0.0) || !std::isfinite(mu) || !std::isfinite(sigma)) {
            throw FormatError("weekly stats row " + std::to_string(row) + ": mu and sigma must be nonnegative", row);
        }
        auto& flags = seen[platform];
        flags.resize(kWeeklyBins, false);
        if (flags[static_cast<std::size_t>(bin)]) {
            throw FormatError("weekly stats row " + std::to_string(row) + ": duplicate bin " + std::to_string(bin) +
                                  " for " + platform,
                              row);
        }
        flags[static_cast<std::size_t>(bin)] = true;
        auto& stats = out[platform];
        stats.platform = platform;
        stats.entries[static_cast<std::size_t>(bin)] = BinStat{mu, sigma};
    }
    for (const auto& [platform, flags] : seen) {
        const auto missing = std::find(flags.begin(), flags.end(), false);
        if (missing != flags.end()) {
            throw FormatError("weekly stats: platform " + platform + " is missing bin " +
                              std::to_string(missing - flags.begin()) + " (672 rows required)");
        }
    }
    return out;
}

std::string write_weekly_stats_csv(const std::vector<WeeklyBinStats>& stats)
{
    std::string out = "platform,bin_index,mu,sigma\n";
    for (const auto& s : stats) {
        text::check_identifier(s.platform, "platform");
        for (int b = 0; b < kWeeklyBins; ++b) {
            const auto& e = s.entries[static_cast<std::size_t>(b)];
            out += s.platform + "," + std::to_string(b) + "," + text::format_double(e.mu) + "," +
                   text::format_double(e.sigma) + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// AOI
// ---------------------------------------------------------------------------

namespace {

/// Returns false for centers outside the image rectangle.
bool aoi_pixel(const GridMask& aoi, double x, double y, std::size_t& r, std::size_t& c)
{
    const double cols = static_cast<double>(aoi.cols());
    const double rows = static_cast<double>(aoi.rows());
    if (!(x >= 0.0 && x <= cols && y >= 0.0 && y <= rows)) {
        return false;
    }
    c = std::min(static_cast<std::size_t>(std::llround(x)), aoi.cols() - 1);
    r = std::min(static_cast<std::size_t>(std::llround(y)), aoi.rows() - 1);
    return true;
}

} // namespace

FrameObservation apply_aoi(const FrameObservation& obs, const GridMask& aoi, AoiReport* report)
{
    if (aoi.empty()) {
        throw ValidationError("apply_aoi: empty AOI mask");
    }
    AoiReport local;
    FrameObservation out;
    out.camera = obs.camera;
    out.event_id = obs.event_id;
    out.offset_s = obs.offset_s;
    switch (obs.kind()) {
    case PayloadKind::Mask: {
        const auto& mask = std::get<GridMask>(obs.payload);
        if (!mask.same_shape(aoi)) {
            throw ValidationError("apply_aoi: mask " + std::to_string(mask.rows()) + "x" +
                                  std::to_string(mask.cols()) + " does not match AOI " + std::to_string(aoi.rows()) +
                                  "x" + std::to_string(aoi.cols()) + " for camera " + obs.camera);
        }
        out.payload = mask & aoi;
        break;
    }
    case PayloadKind::Boxes: {
        std::vector<DetectionBox> kept;
        for (const auto& b : std::get<std::vector<DetectionBox>>(obs.payload)) {
            std::size_t r = 0, c = 0;
            if (!aoi_pixel(aoi, b.cx, b.cy, r, c)) {
                ++local.dropped_out_of_image;
            } else if (aoi.get(r, c)) {
                kept.push_back(b);
            } else {
                ++local.removed_outside_aoi;
            }
        }
        out.payload = std::move(kept);
        break;
    }
    case PayloadKind::Points: {
        std::vector<HeadPoint> kept;
        for (const auto& p : std::get<std::vector<HeadPoint>>(obs.payload)) {
            std::size_t r = 0, c = 0;
            if (!aoi_pixel(aoi, p.x, p.y, r, c)) {
                ++local.dropped_out_of_image;
            } else if (aoi.get(r, c)) {
                kept.push_back(p);
            } else {
                ++local.removed_outside_aoi;
            }
        }
        out.payload = std::move(kept);
        break;
    }
    case PayloadKind::Logits:
        out.payload = obs.payload;
        break;
    }
    if (report) {
        report->removed_outside_aoi += local.removed_outside_aoi;
        report->dropped_out_of_image += local.dropped_out_of_image;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data directory
// ---------------------------------------------------------------------------

const ArrivalEvent* Dataset::find_event(const EventId& id) const
{
    for (const auto& e : events) {
        if (e.event_id == id) return &e;
    }
    return nullptr;
}

void Dataset::validate() const
{
    platform_config.validate();
    std::set<EventId> ids;
    for (const auto& e : events) {
        e.validate();
        if (!ids.insert(e.event_id).second) {
            throw ValidationError("Dataset: duplicate event_id " + e.event_id);
        }
        for (const auto& f : e.frames) {
            if (!platform_config.has_camera(f.camera)) {
                throw ValidationError("Dataset: event " + e.event_id + " references unknown camera " + f.camera);
            }
        }
    }
    if (scheme) scheme->validate();
}

std::string write_platform_json(const PlatformConfig& config)
{
    json obj;
    obj["format"] = "crowdcalib-platform/1";
    obj["platform"] = config.platform;
    obj["cameras"] = config.cameras;
    return obj.dump(2) + "\n";
}

PlatformConfig read_platform(const DataLayout& layout)
{
    const auto content = text::read_file(layout.platform_file());
    json obj;
    try {
        obj = json::parse(content);
    } catch (const json::parse_error& e) {
        throw FormatError(layout.platform_file().string() + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("platform") || !obj["platform"].is_string() || !obj.contains("cameras") ||
        !obj["cameras"].is_array()) {
        throw FormatError(layout.platform_file().string() + ": expected {\"platform\": string, \"cameras\": [string]}");
    }
    PlatformConfig config;
    config.platform = obj["platform"].get<std::string>();
    for (const auto& c : obj["cameras"]) {
        if (!c.is_string()) throw FormatError(layout.platform_file().string() + ": camera ids must be strings");
        config.cameras.push_back(c.get<std::string>());
    }
    std::sort(config.cameras.begin(), config.cameras.end());
    if (std::adjacent_find(config.cameras.begin(), config.cameras.end()) != config.cameras.end()) {
        throw FormatError(layout.platform_file().string() + ": duplicate camera id");
    }
    for (const auto& camera : config.cameras) {
        text::check_identifier(camera, "camera");
        const auto path = layout.aoi_file(camera);
        if (fs::exists(path)) {
            try {
                config.aoi.emplace(camera, read_mask_pgm(text::read_file(path)));
            } catch (const FormatError& e) {
                throw FormatError(path.string() + ": " + e.what(), e.location());
            }
        }
    }
    config.validate();
    return config;
}

std::vector<MaskRef> list_masks(const DataLayout& layout)
{
    std::vector<MaskRef> out;
    const fs::path root = layout.root / "masks";
    if (!fs::exists(root)) return out;
    for (const auto& cam : fs::directory_iterator(root)) {
        if (!cam.is_directory()) continue;
        for (const auto& ev : fs::directory_iterator(cam.path())) {
            if (!ev.is_directory()) continue;
            for (const auto& file : fs::directory_iterator(ev.path())) {
                if (!file.is_regular_file() || file.path().extension() != ".pgm") continue;
                int offset = 0;
                try {
                    offset = parse_offset_token(file.path().stem().string());
                } catch (const ValidationError&) {
                    throw FormatError("unexpected mask file name " + file.path().string() +
                                      " (expected m5.pgm, 0.pgm or p5.pgm)");
                }
                out.push_back(MaskRef{cam.path().filename().string(), ev.path().filename().string(), offset,
                                      file.path()});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const MaskRef& a, const MaskRef& b) {
        return std::tie(a.camera, a.event_id, a.offset_s) < std::tie(b.camera, b.event_id, b.offset_s);
    });
    return out;
}

Dataset load_dataset(const fs::path& dir, const LoadOptions& options)
{
    const DataLayout layout{dir};
    Dataset ds;
    ds.platform_config = read_platform(layout);

    const auto records = read_occupancy_csv(text::read_file(layout.ground_truth_file()));
    std::map<EventId, std::size_t> index;
    for (const auto& rec : records) {
        if (rec.platform != ds.platform_config.platform) {
            throw FormatError("ground truth: platform " + rec.platform + " does not match data directory platform " +
                              ds.platform_config.platform);
        }
        index.emplace(rec.event_id, ds.events.size());
        ds.events.push_back(ArrivalEvent{rec.event_id, rec.platform, rec.arrival_time, rec.occupancy, {}});
    }

    AoiReport aoi_report;
    auto attach = [&](FrameObservation obs, const std::string& where) {
        const auto it = index.find(obs.event_id);
        if (it == index.end()) throw FormatError(where + ": unknown event_id " + obs.event_id);
        if (!ds.platform_config.has_camera(obs.camera)) throw FormatError(where + ": unknown camera " + obs.camera);
        if (options.apply_aoi) {
            const auto aoi = ds.platform_config.aoi.find(obs.camera);
            if (aoi != ds.platform_config.aoi.end()) obs = apply_aoi(obs, aoi->second, &aoi_report);
        }
        ds.events[it->second].frames.push_back(std::move(obs));
    };

    if (fs::exists(layout.observations_file())) {
        auto observations = read_detections_jsonl(text::read_file(layout.observations_file()));
        for (std::size_t i = 0; i < observations.size(); ++i) {
            attach(std::move(observations[i]), "observations record " + std::to_string(i + 1));
        }
    }
    if (options.load_masks) {
        for (const auto& ref : list_masks(layout)) {
            FrameObservation obs;
            obs.camera = ref.camera;
            obs.event_id = ref.event_id;
            obs.offset_s = ref.offset_s;
            try {
                obs.payload = read_mask_pgm(text::read_file(ref.path));
            } catch (const FormatError& e) {
                throw FormatError(ref.path.string() + ": " + e.what(), e.location());
            }
            attach(std::move(obs), ref.path.string());
        }
    }
    if (aoi_report.dropped_out_of_image > 0) {
        warn(std::to_string(aoi_report.dropped_out_of_image) + " detections/points outside the image were dropped");
    }

    if (fs::exists(layout.stats_file())) {
        auto stats = read_weekly_stats_csv(text::read_file(layout.stats_file()));
        const auto it = stats.find(ds.platform_config.platform);
        if (it == stats.end()) {
            throw FormatError(layout.stats_file().string() + ": no rows for platform " + ds.platform_config.platform);
        }
        ds.bin_stats = it->second;
    }
    if (fs::exists(layout.scheme_file())) {
        for (const auto& s : labeling::read_scheme_csv(text::read_file(layout.scheme_file()))) {
            if (s.platform == ds.platform_config.platform) ds.scheme = s;
        }
    }
    try {
        ds.validate();
    } catch (const ValidationError& e) {
        throw FormatError(dir.string() + ": " + e.what());
    }
    return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& dir)
{
    const DataLayout layout{dir};
    text::check_identifier(dataset.platform_config.platform, "platform");
    text::write_file(layout.platform_file(), write_platform_json(dataset.platform_config));
    for (const auto& [camera, mask] : dataset.platform_config.aoi) {
        text::write_file(layout.aoi_file(camera), write_mask_pgm(mask));
    }
    std::vector<OccupancyRecord> records;
    std::vector<FrameObservation> observations;
    for (const auto& e : dataset.events) {
        records.push_back(OccupancyRecord{e.platform, e.arrival_time, format_rfc3339(e.arrival_time), e.occupancy,
                                          e.event_id});
        for (const auto& f : e.frames) {
            if (f.kind() == PayloadKind::Mask) {
                text::check_identifier(f.camera, "camera");
                text::check_identifier(f.event_id, "event_id");
                text::write_file(layout.mask_file(f.camera, f.event_id, f.offset_s),
                                 write_mask_pgm(std::get<GridMask>(f.payload)));
            } else {
                observations.push_back(f);
            }
        }
    }
    text::write_file(layout.ground_truth_file(), write_occupancy_csv(records));
    text::write_file(layout.observations_file(), write_detections_jsonl(observations));
    if (dataset.bin_stats) {
        text::write_file(layout.stats_file(), write_weekly_stats_csv({*dataset.bin_stats}));
    }
    if (dataset.scheme) {
        text::write_file(layout.scheme_file(), labeling::write_scheme_csv({*dataset.scheme}));
    }
}

} // namespace crowdcalib::ingest
