#include "crossgap/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "crossgap/errors.hpp"
#include "crossgap/log.hpp"

namespace crossgap {

TrainResult train_pipeline(const StreamFactory& open_input, double fps, const TrainParams& prm) {
    if (!(fps > 0.0)) throw DataError("fps must be > 0");
    if (prm.skip < 1) throw DataError("frame skip must be >= 1");

    // Pass 1: dense flow between frames `skip` apart, averaged into the map.
    auto input = open_input();
    const int w = input->width();
    const int h = input->height();
    InfluxMap map = make_influx_map(w, h, prm.stride);

    auto skipped = decimate(std::move(input), prm.skip);
    std::optional<Frame> prev;
    double last_t = 0.0;
    while (auto f = skipped->next()) {
        if (prev) accumulate(map, dense_flow(*prev, *f, prm.stride, prm.flow));
        last_t = f->timestamp;
        prev = std::move(*f);
    }
    if (map.frames_trained == 0) throw DataError("training stream yielded no flow fields");
    if (last_t + 1.0 / fps < prm.min_duration)
        throw DataError("training footage too short: " + std::to_string(last_t) + " s < " +
                        std::to_string(prm.min_duration) + " s required");

    if (prm.two_way) nullify_outbound(map);
    const double diag = std::hypot(static_cast<double>(w), static_cast<double>(h));
    auto pfa = locate_pfa(map, prm.backtrack_eps);
    intensify(map, pfa, prm.alpha, prm.rho_frac * diag);
    SamplePointSet points = sample_points(map, prm.sample_count, prm.sigma_s_frac * diag, prm.seed);
    if (points.shortfall)
        log::info("sample shortfall: %zu of %d points (map support is small)", points.points.size(),
                  prm.sample_count);
    log::info("influx trained: %lld fields, pfa (%.1f, %.1f), %zu sample points",
              static_cast<long long>(map.frames_trained), pfa[0], pfa[1], points.points.size());

    // Pass 2: online-style activity over consecutive frames.
    auto second = open_input();
    ActivitySeries raw;
    raw.rate = fps;
    prev.reset();
    while (auto f = second->next()) {
        if (prev) {
            SparseFlow flow = sparse_flow(*prev, *f, points.points, prm.flow);
            raw.samples.push_back({f->index, f->timestamp, compute_activity(flow, points)});
        }
        prev = std::move(*f);
    }
    if (raw.samples.size() < 2) throw DataError("training stream yielded no activity samples");

    ActivitySeries series = resample(raw, prm.detector_rate);
    auto maxima = find_salient_maxima(series, prm.min_separation, prm.k_sal);
    log::info("training activity: %zu samples at %.0f Hz, %zu salient maxima", series.samples.size(),
              prm.detector_rate, maxima.size());

    std::size_t n = static_cast<std::size_t>(std::lround(prm.template_seconds * prm.detector_rate));
    PulseTemplate tpl = extract_template(series, maxima, n, prm.peak_fraction);
    NoiseModel noise = estimate_noise(series, maxima, prm.guard);

    TrainResult result;
    result.model.image_width = w;
    result.model.image_height = h;
    result.model.fps = fps;
    result.model.influx = std::move(map);
    result.model.points = std::move(points);
    result.model.tpl = std::move(tpl);
    result.model.noise = noise;
    result.model.config = prm;
    result.activity = std::move(series);
    result.maxima = std::move(maxima);
    return result;
}

DetectResult detect_pipeline(FrameStream& input, const TrainedModel& model, const DetectorConfig& cfg,
                             const std::function<void(const CrossingState&)>& on_change) {
    if (input.width() != model.image_width || input.height() != model.image_height)
        throw DataError("stream dimensions do not match the model");
    if (model.points.points.empty()) throw DataError("model has no sample points");

    Detector detector(cfg, model.tpl, model.noise);
    OnlineResampler resampler(cfg.rate);
    const double gamma = detector.threshold().gamma;

    DetectResult result;
    std::vector<ActivitySample> grid;
    std::optional<Frame> prev;
    bool announced = false;
    Crossing last_state = Crossing::kTraffic;

    auto t0 = std::chrono::steady_clock::now();
    while (auto f = input.next()) {
        ++result.frames;
        if (prev) {
            SparseFlow flow = sparse_flow(*prev, *f, model.points.points, model.config.flow);
            double a = compute_activity(flow, model.points);
            grid.clear();
            resampler.push(f->timestamp, a, grid);
            for (const auto& g : grid) {
                CrossingState st = detector.step(g.value, g.timestamp);
                bool warmed = detector.warmed_up();
                result.events.push_back({g.timestamp, st.state, warmed ? detector.correlator() : 0.0,
                                         gamma, warmed ? st.margin : 0.0, warmed});
                if (!announced) {
                    announced = true;
                    last_state = st.state;
                    if (on_change) on_change(st);
                } else if (st.state != last_state) {
                    if (st.state == Crossing::kTraffic) result.onsets.push_back(g.timestamp);
                    last_state = st.state;
                    if (on_change) on_change(st);
                }
            }
        }
        prev = std::move(*f);
    }
    result.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

void write_events_csv(const std::filesystem::path& file, const std::vector<DetectEvent>& events) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << "timestamp,state,correlator,gamma,margin\n";
    char row[160];
    for (const auto& e : events) {
        if (e.warmed)
            std::snprintf(row, sizeof(row), "%.9g,%s,%.9g,%.9g,%.9g\n", e.timestamp, to_string(e.state),
                          e.correlator, e.gamma, e.margin);
        else
            std::snprintf(row, sizeof(row), "%.9g,%s,,%.9g,\n", e.timestamp, to_string(e.state), e.gamma);
        out << row;
    }
}

std::vector<DetectEvent> read_events_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open events CSV " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty events CSV");
    std::vector<DetectEvent> events;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        DetectEvent e;
        const char* p = line.c_str();
        char* end = nullptr;
        e.timestamp = std::strtod(p, &end);
        if (*end != ',') throw DataError("malformed events row: " + line);
        p = end + 1;
        if (std::strncmp(p, "TRAFFIC", 7) == 0) {
            e.state = Crossing::kTraffic;
            p += 7;
        } else if (std::strncmp(p, "GAP", 3) == 0) {
            e.state = Crossing::kGap;
            p += 3;
        } else {
            throw DataError("malformed state in events row: " + line);
        }
        if (*p != ',') throw DataError("malformed events row: " + line);
        ++p;
        if (*p == ',') {  // warm-up row: empty correlator
            e.warmed = false;
            ++p;
            e.gamma = std::strtod(p, &end);
        } else {
            e.warmed = true;
            e.correlator = std::strtod(p, &end);
            if (*end != ',') throw DataError("malformed events row: " + line);
            e.gamma = std::strtod(end + 1, &end);
            if (*end == ',') e.margin = std::strtod(end + 1, nullptr);
        }
        events.push_back(e);
    }
    return events;
}

void write_trace_csv(const std::filesystem::path& file, const ActivitySeries& series,
                     const std::vector<DetectEvent>* states) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << "index,timestamp,activity,state\n";
    char row[160];
    for (std::size_t i = 0; i < series.samples.size(); ++i) {
        const auto& s = series.samples[i];
        const char* state = "";
        if (states != nullptr && i < states->size()) state = to_string((*states)[i].state);
        std::snprintf(row, sizeof(row), "%lld,%.9g,%.9g,%s\n", static_cast<long long>(s.index), s.timestamp,
                      s.value, state);
        out << row;
    }
}

}  // namespace crossgap
