// crossgap — traffic-gap detection engine CLI.
//
// Subcommands: simulate, train, detect, eval, peer. See README.md.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "crossgap/errors.hpp"
#include "crossgap/eval.hpp"
#include "crossgap/log.hpp"
#include "crossgap/model.hpp"
#include "crossgap/peer.hpp"
#include "crossgap/pipeline.hpp"
#include "crossgap/simgen.hpp"

namespace fs = std::filesystem;
using namespace crossgap;

namespace {

struct StreamFlags {
    std::string input;
    std::string format = "pgm";
    double fps = 8.0;
    int decimation = 1;
    int width = 0;
    int height = 0;

    void attach(CLI::App* cmd, bool required = true) {
        auto* opt = cmd->add_option("--input", input, "input source (path, or - for stdin)");
        if (required) opt->required();
        cmd->add_option("--format", format, "input format: pgm | y4m | raw8")
            ->check(CLI::IsMember({"pgm", "y4m", "raw8"}));
        cmd->add_option("--fps", fps, "input frame rate");
        cmd->add_option("--decimate", decimation, "keep every k-th input frame");
        cmd->add_option("--width", width, "frame width (raw8)");
        cmd->add_option("--height", height, "frame height (raw8)");
    }

    StreamConfig config() const {
        StreamConfig cfg;
        cfg.source = input;
        if (format == "pgm")
            cfg.format = StreamFormat::kPgmDir;
        else if (format == "y4m")
            cfg.format = StreamFormat::kY4m;
        else
            cfg.format = StreamFormat::kRaw8;
        cfg.fps = fps;
        cfg.decimation = decimation;
        cfg.width = width;
        cfg.height = height;
        return cfg;
    }
};

SceneScript resolve_script(const std::string& preset_name, const std::string& script_path) {
    if (!script_path.empty()) return load_script(script_path);
    return preset(preset_name);
}

void print_state_line(const CrossingState& st) {
    std::printf("t=%.3f STATE=%s\n", st.timestamp, to_string(st.state));
    std::fflush(stdout);
}

int cmd_simulate(const std::string& preset_name, const std::string& script_path, const std::string& out,
                 std::uint64_t seed, double duration, double fps, int width, int height, double noise,
                 bool seed_set, bool duration_set, bool fps_set, bool dims_set, bool noise_set) {
    SceneScript script = resolve_script(preset_name, script_path);
    if (seed_set) script.seed = seed;
    if (duration_set) script.duration = duration;
    if (fps_set) script.fps = fps;
    if (dims_set) {
        script.width = width;
        script.height = height;
    }
    if (noise_set) script.noise_std = noise;

    fs::create_directories(out);
    auto [stream, truth] = render(script);
    write_pgm_dir(fs::path(out) / "frames", *stream);
    write_truth_csv(fs::path(out) / "truth.csv", truth);
    save_script(fs::path(out) / "script.json", script);
    std::printf("simulated %lld frames (%.0f s at %.3g fps), %zu vehicles -> %s\n",
                static_cast<long long>(script.frame_count()), script.duration, script.fps,
                script.vehicles.size(), out.c_str());
    return kExitOk;
}

int cmd_train(const StreamFlags& in, const std::string& out_model, TrainParams prm,
              const std::string& trace_out) {
    StreamConfig cfg = in.config();
    if (cfg.source == "-") throw DataError("training needs a reopenable source, not stdin");
    StreamFactory factory = [cfg] {
        return std::make_unique<QueuedStream>(open_stream(cfg));
    };
    TrainResult result = train_pipeline(factory, cfg.fps / cfg.decimation, prm);

    save_model(out_model, result.model);
    if (!trace_out.empty()) write_trace_csv(trace_out, result.activity);

    const TrainedModel& m = result.model;
    DetectorConfig det;
    double snr = std::sqrt(m.tpl.energy) / m.noise.sigma;
    std::printf("model written to %s\n", out_model.c_str());
    std::printf("  point of first appearance: (%.1f, %.1f)\n", m.influx.pfa[0], m.influx.pfa[1]);
    std::printf("  sample points: %zu of %d requested%s\n", m.points.points.size(), m.points.requested,
                m.points.shortfall ? " (shortfall: small map support)" : "");
    std::printf("  template: %zu samples at %.0f Hz, energy %.6g, peak offset %zu\n", m.tpl.size(),
                m.tpl.rate, m.tpl.energy, m.tpl.peak_offset);
    std::printf("  sigma: %.6g (%s over %zu samples)\n", m.noise.sigma, m.noise.method.c_str(),
                m.noise.sample_count);
    std::printf("  predicted P_D at p_fa %.3g, snr %.3g: %.4f\n", det.p_fa, snr,
                predicted_pd(det.p_fa, snr));
    return kExitOk;
}

int cmd_detect(const StreamFlags& in, const std::string& model_path, DetectorConfig det,
               const std::string& out_events, const std::string& trace_out) {
    TrainedModel model = load_model(model_path);
    StreamConfig cfg = in.config();
    if (cfg.width == 0) cfg.width = model.image_width;
    if (cfg.height == 0) cfg.height = model.image_height;
    if (cfg.fps != model.fps)
        log::warn("stream fps %.3g differs from model fps %.3g", cfg.fps, model.fps);
    QueuedStream stream(open_stream(cfg));

    DetectResult result = detect_pipeline(stream, model, det, print_state_line);

    if (!out_events.empty()) write_events_csv(out_events, result.events);
    if (!trace_out.empty()) {
        ActivitySeries series;
        series.rate = det.rate;
        for (const auto& e : result.events)
            series.samples.push_back({static_cast<std::int64_t>(series.samples.size()), e.timestamp,
                                      e.correlator});
        write_trace_csv(trace_out, series, &result.events);
    }
    double fps_done = result.elapsed_seconds > 0 ? result.frames / result.elapsed_seconds : 0.0;
    std::fprintf(stderr, "processed %lld frames in %.2f s (%.1f fps), %zu TRAFFIC onsets\n",
                 static_cast<long long>(result.frames), result.elapsed_seconds, fps_done,
                 result.onsets.size());
    return kExitOk;
}

int cmd_eval(const std::string& events_path, const std::string& truth_path, const std::string& out) {
    std::vector<DetectEvent> events = read_events_csv(events_path);
    GroundTruth truth = read_truth_csv(truth_path);
    EvalReport report = evaluate(events, truth);

    fs::create_directories(out);
    write_report_json(fs::path(out) / "report.json", report);
    write_hist_csv(fs::path(out) / "hist.csv", report);
    write_roc_csv(fs::path(out) / "roc.csv", report);

    std::printf("vehicles: %zu detected, %zu missed; false alarms: %zu (%.2f/h over %.0f s)\n",
                report.detections, report.misses, report.false_alarms, report.false_alarm_rate_per_hour,
                report.duration);
    for (const auto& v : report.vehicles) {
        if (v.detected)
            std::printf("  vehicle %d: onset %.2f s, arrival %.2f s, warning %.2f s\n", v.id, v.onset,
                        v.arrival, v.warning);
        else
            std::printf("  vehicle %d: MISSED (arrival %.2f s)\n", v.id, v.arrival);
    }
    return kExitOk;
}

int cmd_peer(const StreamFlags& in, const std::string& model_path, DetectorConfig det,
             const std::string& listen, const std::string& connect, double staleness, bool pace) {
    TrainedModel model = load_model(model_path);
    StreamConfig cfg = in.config();
    if (cfg.width == 0) cfg.width = model.image_width;
    if (cfg.height == 0) cfg.height = model.image_height;

    PeerConfig pc;
    pc.node_id = random_node_id();
    pc.staleness_limit_s = staleness;
    std::string endpoint = listen.empty() ? connect : listen;
    pc.role = listen.empty() ? PeerRole::kConnect : PeerRole::kListen;
    auto colon = endpoint.rfind(':');
    if (colon == std::string::npos) throw DataError("endpoint must be host:port");
    pc.host = endpoint.substr(0, colon);
    pc.port = static_cast<std::uint16_t>(std::stoi(endpoint.substr(colon + 1)));

    std::mutex mu;
    CrossingState latest;  // fail-safe default: TRAFFIC
    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [t0] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    PeerLink link(
        pc,
        [&] {
            std::lock_guard<std::mutex> lock(mu);
            return latest;
        },
        [&](const MergedIndication& m) {
            std::printf("t=%.3f MERGED=%s staleness=%.2f\n", elapsed(), to_string(m.state),
                        std::isinf(m.staleness) ? -1.0 : m.staleness);
            std::fflush(stdout);
        });
    link.start();

    QueuedStream stream(open_stream(cfg));
    DetectResult result = detect_pipeline(stream, model, det, [&](const CrossingState& st) {
        {
            std::lock_guard<std::mutex> lock(mu);
            latest = st;
        }
        print_state_line(st);
        if (pace) {
            // Hold to the stream clock so the exchange runs at real time.
            double ahead = st.timestamp - elapsed();
            if (ahead > 0) std::this_thread::sleep_for(std::chrono::duration<double>(ahead));
        }
    });
    (void)result;
    link.stop();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crossgap: camera-based traffic gap detection"};
    app.require_subcommand(1);

    // simulate ---------------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "render a synthetic scene to PGM frames + ground truth");
    std::string sim_preset = "single-car", sim_script, sim_out = "scene";
    std::uint64_t sim_seed = 1;
    double sim_duration = 0, sim_fps = 0, sim_noise = 0;
    int sim_w = 0, sim_h = 0;
    sim->add_option("--preset", sim_preset,
                    "scene preset: single-car | car-train | late-appearer | walker-distractor | quiet");
    sim->add_option("--script", sim_script, "scene script JSON (overrides --preset)");
    sim->add_option("--out", sim_out, "output directory")->required();
    auto* so_seed = sim->add_option("--seed", sim_seed, "scene seed");
    auto* so_dur = sim->add_option("--duration", sim_duration, "scene length, seconds");
    auto* so_fps = sim->add_option("--fps", sim_fps, "frame rate");
    auto* so_w = sim->add_option("--width", sim_w, "frame width");
    auto* so_h = sim->add_option("--height", sim_h, "frame height");
    auto* so_noise = sim->add_option("--noise", sim_noise, "pixel noise std");

    // train ------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "learn influx map, pulse template and noise level");
    StreamFlags train_in;
    train_in.attach(train);
    std::string train_out = "model.json", train_trace;
    TrainParams prm;
    train->add_option("--out", train_out, "output model file");
    train->add_option("--stride", prm.stride, "influx grid stride, px");
    train->add_option("--skip", prm.skip, "frame-skip factor for training flow");
    train->add_flag("--two-way", prm.two_way, "nullify outbound (upward) influx vectors");
    train->add_option("--alpha", prm.alpha, "intensification gain");
    train->add_option("--rho-frac", prm.rho_frac, "intensification radius / image diagonal");
    train->add_option("--sigma-frac", prm.sigma_s_frac, "sampling std / image diagonal");
    train->add_option("--points", prm.sample_count, "online sample point count");
    train->add_option("--seed", prm.seed, "sampling seed");
    train->add_option("--rate", prm.detector_rate, "detector rate, Hz");
    train->add_option("--template-seconds", prm.template_seconds, "template window length, s");
    train->add_option("--peak-fraction", prm.peak_fraction, "window share preceding the peak");
    train->add_option("--k-sal", prm.k_sal, "salience threshold, robust stds");
    train->add_option("--min-separation", prm.min_separation, "min seconds between training maxima");
    train->add_option("--guard", prm.guard, "noise-estimation exclusion half-width, s");
    train->add_option("--min-duration", prm.min_duration, "required training footage, s");
    train->add_option("--window-radius", prm.flow.window_radius, "LK window radius, px");
    train->add_option("--levels", prm.flow.levels, "LK pyramid levels");
    train->add_option("--trace-out", train_trace, "write training activity trace CSV");

    // detect -----------------------------------------------------------------
    auto* detect = app.add_subcommand("detect", "run the online detector over a stream");
    StreamFlags det_in;
    det_in.attach(detect);
    std::string det_model = "model.json", det_out, det_trace;
    DetectorConfig det_cfg;
    detect->add_option("--model", det_model, "trained model file")->required();
    detect->add_option("--out", det_out, "event log CSV");
    detect->add_option("--trace-out", det_trace, "correlator trace CSV");
    detect->add_option("--pfa", det_cfg.p_fa, "false-alarm probability per window");
    detect->add_option("--rate", det_cfg.rate, "detector rate, Hz");
    detect->add_option("--release-ratio", det_cfg.release_ratio, "hysteresis release ratio");
    detect->add_option("--hold", det_cfg.hold_seconds, "hysteresis hold, s");

    // eval -------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "score an event log against ground truth");
    std::string eval_events, eval_truth, eval_out = "eval";
    eval->add_option("--events", eval_events, "event log CSV from detect")->required();
    eval->add_option("--truth", eval_truth, "ground truth CSV")->required();
    eval->add_option("--out", eval_out, "report directory");

    // peer -------------------------------------------------------------------
    auto* peer = app.add_subcommand("peer", "run detect and merge with a second node over TCP");
    StreamFlags peer_in;
    peer_in.attach(peer);
    std::string peer_model = "model.json", peer_listen, peer_connect;
    DetectorConfig peer_cfg;
    double peer_staleness = 2.0;
    bool peer_no_pace = false;
    peer->add_option("--model", peer_model, "trained model file")->required();
    peer->add_option("--listen", peer_listen, "listen endpoint host:port");
    peer->add_option("--connect", peer_connect, "connect endpoint host:port");
    peer->add_option("--pfa", peer_cfg.p_fa, "false-alarm probability per window");
    peer->add_option("--staleness", peer_staleness, "remote staleness limit, s");
    peer->add_flag("--no-pace", peer_no_pace, "process frames as fast as possible");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(sim_preset, sim_script, sim_out, sim_seed, sim_duration, sim_fps, sim_w,
                                sim_h, sim_noise, so_seed->count() > 0, so_dur->count() > 0,
                                so_fps->count() > 0, so_w->count() > 0 && so_h->count() > 0,
                                so_noise->count() > 0);
        if (train->parsed()) return cmd_train(train_in, train_out, prm, train_trace);
        if (detect->parsed()) return cmd_detect(det_in, det_model, det_cfg, det_out, det_trace);
        if (eval->parsed()) return cmd_eval(eval_events, eval_truth, eval_out);
        if (peer->parsed()) {
            if (peer_listen.empty() == peer_connect.empty())
                throw DataError("peer needs exactly one of --listen or --connect");
            return cmd_peer(peer_in, peer_model, peer_cfg, peer_listen, peer_connect, peer_staleness,
                            !peer_no_pace);
        }
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
