#include "crossgap/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "crossgap/errors.hpp"

namespace crossgap {

namespace {

using nlohmann::json;

constexpr double kMinSize = 4.0;  // rendered size at the entry point
constexpr int kTextureCells = 6;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Warped travel profile: slow near the entry, fast near the camera.
// g(0)=0, g(1)=1, g'(0)=c, g'(1)=2-c.
inline double profile(double f, double c) { return c * f + (1.0 - c) * f * f; }

struct PathGeometry {
    std::array<double, 2> entry;
    std::array<double, 2> exit;
    double profile_c;

    std::array<double, 2> position(double f) const {
        double g = profile(std::clamp(f, 0.0, 1.0), profile_c);
        return {entry[0] + g * (exit[0] - entry[0]), entry[1] + g * (exit[1] - entry[1])};
    }
    double size_at(double f, double base_size) const {
        double g = profile(std::clamp(f, 0.0, 1.0), profile_c);
        return kMinSize + (base_size - kMinSize) * g;
    }
};

struct SpriteTexture {
    std::array<double, kTextureCells * kTextureCells> cells{};

    static SpriteTexture make(std::uint64_t seed) {
        SpriteTexture t;
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.35, 1.0);
        for (auto& c : t.cells) c = u(rng);
        return t;
    }

    double sample(double u, double v) const {
        double x = std::clamp(u, 0.0, 1.0) * (kTextureCells - 1);
        double y = std::clamp(v, 0.0, 1.0) * (kTextureCells - 1);
        int x0 = std::min(static_cast<int>(x), kTextureCells - 2);
        int y0 = std::min(static_cast<int>(y), kTextureCells - 2);
        double fx = x - x0, fy = y - y0;
        const double* c = cells.data() + y0 * kTextureCells + x0;
        double top = (1 - fx) * c[0] + fx * c[1];
        double bot = (1 - fx) * c[kTextureCells] + fx * c[kTextureCells + 1];
        return (1 - fy) * top + fy * bot;
    }
};

// Axis-aligned rectangle with per-pixel coverage blending.
void draw_sprite(Frame& frame, double cx, double cy, double half_w, double half_h, double contrast,
                 const SpriteTexture& tex) {
    int x0 = std::max(0, static_cast<int>(std::floor(cx - half_w - 0.5)));
    int x1 = std::min(frame.width - 1, static_cast<int>(std::ceil(cx + half_w + 0.5)));
    int y0 = std::max(0, static_cast<int>(std::floor(cy - half_h - 0.5)));
    int y1 = std::min(frame.height - 1, static_cast<int>(std::ceil(cy + half_h + 0.5)));
    for (int y = y0; y <= y1; ++y) {
        double cov_y = std::max(0.0, std::min(y + 0.5, cy + half_h) - std::max(y - 0.5, cy - half_h));
        if (cov_y <= 0.0) continue;
        double v = (y - (cy - half_h)) / (2.0 * half_h);
        for (int x = x0; x <= x1; ++x) {
            double cov_x = std::max(0.0, std::min(x + 0.5, cx + half_w) - std::max(x - 0.5, cx - half_w));
            if (cov_x <= 0.0) continue;
            double u = (x - (cx - half_w)) / (2.0 * half_w);
            float& px = frame.at(x, y);
            px = std::clamp(px + static_cast<float>(contrast * tex.sample(u, v) * cov_x * cov_y), 0.0f, 1.0f);
        }
    }
}

class SimStream : public FrameStream {
public:
    explicit SimStream(const SceneScript& script) : script_(script), count_(script.frame_count()) {
        if (script_.width < 32 || script_.height < 32) throw DataError("scene dimensions too small");
        if (!(script_.fps > 0.0) || !(script_.duration > 0.0)) throw DataError("bad scene timing");
        for (const auto& v : script_.vehicles) {
            if (!(v.speed > 0.0)) throw DataError("vehicle speed must be > 0");
            if (v.appear_time < 0.0 || v.appear_time > script_.duration)
                throw DataError("vehicle appear_time outside scene duration");
            if (v.entry_fraction < 0.0 || v.entry_fraction >= 1.0)
                throw DataError("vehicle entry_fraction must lie in [0, 1)");
        }
        geo_ = {script_.entry_point(), script_.exit_point(), script_.approach_profile};
        auto e = geo_.entry;
        if (e[0] < 0 || e[1] < 0 || e[0] > script_.width - 1 || e[1] > script_.height - 1)
            throw DataError("entry point outside image");
        build_background();
        std::uint64_t tex_seed = splitmix64(script_.seed ^ 0x7e57e57ULL);
        for (std::size_t i = 0; i < script_.vehicles.size(); ++i)
            vehicle_tex_.push_back(SpriteTexture::make(splitmix64(tex_seed + i)));
        for (std::size_t i = 0; i < script_.distractors.size(); ++i)
            distractor_tex_.push_back(SpriteTexture::make(splitmix64(tex_seed + 1000 + i)));
    }

    std::optional<Frame> next() override {
        if (cursor_ >= count_) return std::nullopt;
        return render_frame(cursor_++);
    }

    int width() const override { return script_.width; }
    int height() const override { return script_.height; }

    Frame render_frame(std::int64_t index) const {
        Frame f;
        f.width = script_.width;
        f.height = script_.height;
        f.index = index;
        f.timestamp = static_cast<double>(index) / script_.fps;
        f.luma = background_;

        const double t = f.timestamp;
        for (std::size_t i = 0; i < script_.vehicles.size(); ++i) {
            const VehicleSpec& v = script_.vehicles[i];
            double fpath = v.entry_fraction + v.speed * (t - v.appear_time);
            if (t < v.appear_time || fpath > 1.0) continue;
            auto pos = geo_.position(fpath);
            double s = geo_.size_at(fpath, v.base_size);
            draw_sprite(f, pos[0], pos[1], 0.75 * s, 0.5 * s, v.contrast, vehicle_tex_[i]);
        }
        for (std::size_t i = 0; i < script_.distractors.size(); ++i) render_distractor(f, i, t);

        if (script_.noise_std > 0.0) {
            std::mt19937_64 rng(splitmix64(script_.seed ^ (0x5eedULL + static_cast<std::uint64_t>(index) * 2654435761ULL)));
            std::normal_distribution<float> noise(0.0f, static_cast<float>(script_.noise_std));
            for (float& p : f.luma) p = std::clamp(p + noise(rng), 0.0f, 1.0f);
        }
        return f;
    }

private:
    void build_background() {
        const int w = script_.width, h = script_.height;
        background_.resize(static_cast<std::size_t>(w) * h);
        // Frozen texture: blurred white noise, giving usable gradients everywhere.
        std::vector<float> tex(background_.size());
        std::mt19937_64 rng(splitmix64(script_.seed ^ 0xba5eba11ULL));
        std::uniform_real_distribution<float> u(-1.0f, 1.0f);
        for (float& v : tex) v = u(rng);
        std::vector<float> tmp(tex.size());
        for (int pass = 0; pass < 2; ++pass) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    float acc = 0.0f;
                    int n = 0;
                    for (int dy = -1; dy <= 1; ++dy) {
                        int yy = y + dy;
                        if (yy < 0 || yy >= h) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            int xx = x + dx;
                            if (xx < 0 || xx >= w) continue;
                            acc += tex[static_cast<std::size_t>(yy) * w + xx];
                            ++n;
                        }
                    }
                    tmp[static_cast<std::size_t>(y) * w + x] = acc / static_cast<float>(n);
                }
            }
            tex.swap(tmp);
        }
        for (int y = 0; y < h; ++y) {
            float ramp = 0.30f + 0.25f * static_cast<float>(y) / static_cast<float>(h - 1);
            for (int x = 0; x < w; ++x) {
                std::size_t o = static_cast<std::size_t>(y) * w + x;
                background_[o] = std::clamp(ramp + 0.08f * tex[o], 0.0f, 1.0f);
            }
        }
    }

    void render_distractor(Frame& f, std::size_t i, double t) const {
        const DistractorSpec& d = script_.distractors[i];
        if (const auto* walker = std::get_if<LateralWalker>(&d)) {
            if (t < walker->start_time) return;
            double x = -walker->size_px + walker->speed_px_s * (t - walker->start_time);
            if (x > script_.width + walker->size_px) return;
            double y = walker->y_fraction * script_.height;
            draw_sprite(f, x, y, 0.5 * walker->size_px, walker->size_px, walker->contrast, distractor_tex_[i]);
        } else if (const auto* foliage = std::get_if<FoliagePatch>(&d)) {
            double cx = foliage->x_fraction * script_.width;
            double cy = foliage->y_fraction * script_.height;
            int r = static_cast<int>(std::ceil(foliage->radius_px));
            for (int y = std::max(0, static_cast<int>(cy) - r);
                 y <= std::min(script_.height - 1, static_cast<int>(cy) + r); ++y) {
                for (int x = std::max(0, static_cast<int>(cx) - r);
                     x <= std::min(script_.width - 1, static_cast<int>(cx) + r); ++x) {
                    double dist = std::hypot(x - cx, y - cy);
                    if (dist > foliage->radius_px) continue;
                    double envelope = 1.0 - dist / foliage->radius_px;
                    std::uint64_t hp = splitmix64((static_cast<std::uint64_t>(x) << 20) ^
                                                  static_cast<std::uint64_t>(y) ^ (script_.seed << 40) ^ (i + 7));
                    double phase = 2.0 * M_PI * static_cast<double>(hp % 4096) / 4096.0;
                    double wave = std::sin(2.0 * M_PI * foliage->frequency_hz * t + phase);
                    float& px = f.at(x, y);
                    px = std::clamp(px + static_cast<float>(foliage->amplitude * envelope * wave), 0.0f, 1.0f);
                }
            }
        } else if (const auto* car = std::get_if<StoppingCar>(&d)) {
            if (t < car->appear_time) return;
            double t_reach = car->appear_time + car->stop_fraction / car->speed;
            double t_leave = t_reach + car->stop_duration;
            double fpath, lateral = 0.0;
            if (t <= t_reach) {
                fpath = car->speed * (t - car->appear_time);
            } else if (t <= t_leave) {
                fpath = car->stop_fraction;
            } else {
                // Turns off the road: slides sideways out of frame.
                fpath = car->stop_fraction;
                lateral = 25.0 * (t - t_leave);
            }
            auto pos = geo_.position(fpath);
            double s = geo_.size_at(fpath, car->base_size);
            double x = pos[0] + lateral;
            if (x - 0.75 * s > script_.width) return;
            draw_sprite(f, x, pos[1], 0.75 * s, 0.5 * s, car->contrast, distractor_tex_[i]);
        }
    }

    SceneScript script_;
    std::int64_t count_;
    std::int64_t cursor_ = 0;
    PathGeometry geo_;
    std::vector<float> background_;
    std::vector<SpriteTexture> vehicle_tex_;
    std::vector<SpriteTexture> distractor_tex_;
};

}  // namespace

std::array<double, 2> SceneScript::entry_point() const {
    if (entry[0] >= 0.0 && entry[1] >= 0.0) return entry;
    return {0.5 * width, 0.08 * height};
}

std::array<double, 2> SceneScript::exit_point() const {
    return {exit_x >= 0.0 ? exit_x : 0.5 * width, static_cast<double>(height)};
}

std::int64_t SceneScript::frame_count() const { return std::llround(duration * fps); }

GroundTruth ground_truth(const SceneScript& script) {
    GroundTruth truth;
    PathGeometry geo{script.entry_point(), script.exit_point(), script.approach_profile};
    int id = 0;
    for (const auto& v : script.vehicles) {
        VehicleTruth vt;
        vt.id = id++;
        vt.first_visible = v.appear_time;
        vt.arrival = v.appear_time + (1.0 - v.entry_fraction) / v.speed;
        for (std::int64_t i = 0; i < script.frame_count(); ++i) {
            double t = static_cast<double>(i) / script.fps;
            double f = v.entry_fraction + v.speed * (t - v.appear_time);
            if (t < v.appear_time || f > 1.0) continue;
            auto pos = geo.position(f);
            double s = geo.size_at(f, v.base_size);
            bool inside = pos[0] - 0.75 * s >= 0 && pos[0] + 0.75 * s <= script.width - 1 &&
                          pos[1] - 0.5 * s >= 0 && pos[1] + 0.5 * s <= script.height - 1;
            if (inside) vt.trace.push_back({i, pos[0], pos[1]});
        }
        truth.vehicles.push_back(std::move(vt));
    }
    return truth;
}

std::pair<std::unique_ptr<FrameStream>, GroundTruth> render(const SceneScript& script) {
    return {std::make_unique<SimStream>(script), ground_truth(script)};
}

SceneScript preset(const std::string& name) {
    SceneScript s;
    if (name == "quiet") {
        s.duration = 60.0;
        return s;
    }
    if (name == "single-car") {
        s.duration = 40.0;
        s.vehicles.push_back({15.0, 1.0 / 12.0, 44.0, 0.35, 0.0});
        return s;
    }
    if (name == "car-train") {
        s.duration = 620.0;
        const double visibility[] = {12.0, 10.5, 13.5, 11.0, 14.0};
        const double contrast[] = {0.35, 0.30, 0.40};
        const double size[] = {44.0, 40.0, 50.0, 38.0, 46.0};
        for (int i = 0; i < 20; ++i)
            s.vehicles.push_back({12.0 + 30.0 * i, 1.0 / visibility[i % 5], size[i % 5], contrast[i % 3], 0.0});
        return s;
    }
    if (name == "late-appearer") {
        s.duration = 40.0;
        s.vehicles.push_back({20.0, 0.1, 44.0, 0.35, 0.8});
        return s;
    }
    if (name == "walker-distractor") {
        s.duration = 60.0;
        s.distractors.push_back(LateralWalker{20.0, 0.55, 30.0, 12.0, 0.30});
        s.distractors.push_back(FoliagePatch{0.2, 0.3, 15.0, 0.05, 1.5});
        return s;
    }
    throw DataError("unknown preset: " + name);
}

namespace {

json distractor_to_json(const DistractorSpec& d) {
    json j;
    if (const auto* w = std::get_if<LateralWalker>(&d)) {
        j = {{"type", "lateral-walker"}, {"start_time", w->start_time},   {"y_fraction", w->y_fraction},
             {"speed_px_s", w->speed_px_s}, {"size_px", w->size_px},      {"contrast", w->contrast}};
    } else if (const auto* fp = std::get_if<FoliagePatch>(&d)) {
        j = {{"type", "foliage-patch"}, {"x_fraction", fp->x_fraction}, {"y_fraction", fp->y_fraction},
             {"radius_px", fp->radius_px}, {"amplitude", fp->amplitude}, {"frequency_hz", fp->frequency_hz}};
    } else if (const auto* c = std::get_if<StoppingCar>(&d)) {
        j = {{"type", "stopping-car"}, {"appear_time", c->appear_time}, {"speed", c->speed},
             {"base_size", c->base_size}, {"contrast", c->contrast},
             {"stop_fraction", c->stop_fraction}, {"stop_duration", c->stop_duration}};
    }
    return j;
}

DistractorSpec distractor_from_json(const json& j) {
    std::string type = j.at("type").get<std::string>();
    if (type == "lateral-walker") {
        LateralWalker w;
        w.start_time = j.value("start_time", w.start_time);
        w.y_fraction = j.value("y_fraction", w.y_fraction);
        w.speed_px_s = j.value("speed_px_s", w.speed_px_s);
        w.size_px = j.value("size_px", w.size_px);
        w.contrast = j.value("contrast", w.contrast);
        return w;
    }
    if (type == "foliage-patch") {
        FoliagePatch f;
        f.x_fraction = j.value("x_fraction", f.x_fraction);
        f.y_fraction = j.value("y_fraction", f.y_fraction);
        f.radius_px = j.value("radius_px", f.radius_px);
        f.amplitude = j.value("amplitude", f.amplitude);
        f.frequency_hz = j.value("frequency_hz", f.frequency_hz);
        return f;
    }
    if (type == "stopping-car") {
        StoppingCar c;
        c.appear_time = j.value("appear_time", c.appear_time);
        c.speed = j.value("speed", c.speed);
        c.base_size = j.value("base_size", c.base_size);
        c.contrast = j.value("contrast", c.contrast);
        c.stop_fraction = j.value("stop_fraction", c.stop_fraction);
        c.stop_duration = j.value("stop_duration", c.stop_duration);
        return c;
    }
    throw DataError("unknown distractor type: " + type);
}

}  // namespace

SceneScript load_script(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open script " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed scene script: " + std::string(e.what()));
    }
    SceneScript s;
    s.duration = j.value("duration", s.duration);
    s.fps = j.value("fps", s.fps);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    if (j.contains("entry")) s.entry = {j["entry"][0].get<double>(), j["entry"][1].get<double>()};
    s.exit_x = j.value("exit_x", s.exit_x);
    s.approach_profile = j.value("approach_profile", s.approach_profile);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.seed = j.value("seed", s.seed);
    for (const auto& jv : j.value("vehicles", json::array())) {
        VehicleSpec v;
        v.appear_time = jv.value("appear_time", v.appear_time);
        v.speed = jv.value("speed", v.speed);
        v.base_size = jv.value("base_size", v.base_size);
        v.contrast = jv.value("contrast", v.contrast);
        v.entry_fraction = jv.value("entry_fraction", v.entry_fraction);
        s.vehicles.push_back(v);
    }
    for (const auto& jd : j.value("distractors", json::array())) s.distractors.push_back(distractor_from_json(jd));
    return s;
}

void save_script(const std::filesystem::path& file, const SceneScript& script) {
    json j;
    j["duration"] = script.duration;
    j["fps"] = script.fps;
    j["width"] = script.width;
    j["height"] = script.height;
    j["entry"] = {script.entry[0], script.entry[1]};
    j["exit_x"] = script.exit_x;
    j["approach_profile"] = script.approach_profile;
    j["noise_std"] = script.noise_std;
    j["seed"] = script.seed;
    j["vehicles"] = json::array();
    for (const auto& v : script.vehicles)
        j["vehicles"].push_back({{"appear_time", v.appear_time},
                                 {"speed", v.speed},
                                 {"base_size", v.base_size},
                                 {"contrast", v.contrast},
                                 {"entry_fraction", v.entry_fraction}});
    j["distractors"] = json::array();
    for (const auto& d : script.distractors) j["distractors"].push_back(distractor_to_json(d));
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

void write_truth_csv(const std::filesystem::path& file, const GroundTruth& truth) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << "vehicle_id,first_visible,arrival\n";
    char row[96];
    for (const auto& v : truth.vehicles) {
        std::snprintf(row, sizeof(row), "%d,%.9g,%.9g\n", v.id, v.first_visible, v.arrival);
        out << row;
    }
}

GroundTruth read_truth_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open truth CSV " + file.string());
    GroundTruth truth;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty truth CSV");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        VehicleTruth v;
        char* end = nullptr;
        v.id = static_cast<int>(std::strtol(line.c_str(), &end, 10));
        if (end == nullptr || *end != ',') throw DataError("malformed truth row: " + line);
        v.first_visible = std::strtod(end + 1, &end);
        if (*end != ',') throw DataError("malformed truth row: " + line);
        v.arrival = std::strtod(end + 1, nullptr);
        truth.vehicles.push_back(std::move(v));
    }
    return truth;
}

}  // namespace crossgap
