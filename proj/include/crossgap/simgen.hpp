#ifndef CROSSGAP_SIMGEN_HPP
#define CROSSGAP_SIMGEN_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "crossgap/frame.hpp"

namespace crossgap {

// One approaching vehicle. The path parameter f runs from entry_fraction to
// 1 linearly in time (speed is fraction-of-path per second); arrival is the
// moment f reaches 1, i.e. appear_time + (1 - entry_fraction) / speed.
struct VehicleSpec {
    double appear_time = 0.0;
    double speed = 1.0 / 12.0;    // path fraction per second
    double base_size = 44.0;      // rendered height in px at the camera line
    double contrast = 0.35;       // intensity lift over background
    double entry_fraction = 0.0;  // late appearers enter mid-path
};

struct LateralWalker {
    double start_time = 0.0;
    double y_fraction = 0.55;  // crossing height, fraction of image height
    double speed_px_s = 30.0;
    double size_px = 12.0;
    double contrast = 0.30;
};

struct FoliagePatch {
    double x_fraction = 0.2;
    double y_fraction = 0.3;
    double radius_px = 15.0;
    double amplitude = 0.05;
    double frequency_hz = 1.5;
};

struct StoppingCar {
    double appear_time = 0.0;
    double speed = 1.0 / 12.0;
    double base_size = 44.0;
    double contrast = 0.35;
    double stop_fraction = 0.6;   // path fraction where it halts
    double stop_duration = 8.0;   // seconds parked before turning off-road
};

using DistractorSpec = std::variant<LateralWalker, FoliagePatch, StoppingCar>;

struct SceneScript {
    double duration = 60.0;
    double fps = 8.0;
    int width = 320;
    int height = 180;
    std::array<double, 2> entry{-1.0, -1.0};  // negative -> (w/2, 0.08 h)
    double exit_x = -1.0;                     // negative -> w/2; exit baseline is y = height
    double approach_profile = 0.18;           // near-entry/near-camera pixel speed ratio control
    std::vector<VehicleSpec> vehicles;
    std::vector<DistractorSpec> distractors;
    double noise_std = 0.01;
    std::uint64_t seed = 1;

    std::array<double, 2> entry_point() const;
    std::array<double, 2> exit_point() const;
    std::int64_t frame_count() const;
};

struct TracePoint {
    std::int64_t frame = 0;
    double x = 0.0;
    double y = 0.0;
};

struct VehicleTruth {
    int id = 0;
    double first_visible = 0.0;
    double arrival = 0.0;                // crosses the exit baseline
    std::vector<TracePoint> trace;       // analytic center while fully in frame
};

struct GroundTruth {
    std::vector<VehicleTruth> vehicles;
};

// Analytic ground truth; no rendering involved.
GroundTruth ground_truth(const SceneScript& script);

// Lazily rendered frame stream plus the matching ground truth. Rendering is
// deterministic given the script (bit-identical reruns) and random-access,
// so the stream can be re-opened cheaply.
std::pair<std::unique_ptr<FrameStream>, GroundTruth> render(const SceneScript& script);

// Documented scenario scripts:
//   single-car, car-train, late-appearer, walker-distractor, quiet
SceneScript preset(const std::string& name);

SceneScript load_script(const std::filesystem::path& file);
void save_script(const std::filesystem::path& file, const SceneScript& script);

void write_truth_csv(const std::filesystem::path& file, const GroundTruth& truth);
GroundTruth read_truth_csv(const std::filesystem::path& file);

}  // namespace crossgap

#endif
