#ifndef CROSSGAP_PIPELINE_HPP
#define CROSSGAP_PIPELINE_HPP

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "crossgap/detector.hpp"
#include "crossgap/model.hpp"

namespace crossgap {

// Training makes two passes over the input (dense flow, then activity), so
// the source must be reopenable.
using StreamFactory = std::function<std::unique_ptr<FrameStream>()>;

struct TrainResult {
    TrainedModel model;
    ActivitySeries activity;          // at the detector rate
    std::vector<std::size_t> maxima;  // indices into activity
};

// Dense flow with frame skipping -> influx accumulation -> (two-way)
// nullification -> source localization -> intensification -> point sampling
// -> activity over the training footage -> template + noise.
TrainResult train_pipeline(const StreamFactory& open_input, double fps, const TrainParams& params);

struct DetectEvent {
    double timestamp = 0.0;
    Crossing state = Crossing::kTraffic;
    double correlator = 0.0;
    double gamma = 0.0;
    double margin = 0.0;
    bool warmed = false;
};

struct DetectResult {
    std::vector<DetectEvent> events;  // one per detector step
    std::vector<double> onsets;       // GAP -> TRAFFIC transition times
    std::int64_t frames = 0;
    double elapsed_seconds = 0.0;     // processing time, excludes source I/O wait only if prefetched
};

// Sparse flow at the model's sample points -> activity -> resample to the
// detector rate -> threshold state machine. on_change fires on every state
// transition (and once for the initial state).
DetectResult detect_pipeline(FrameStream& input, const TrainedModel& model, const DetectorConfig& cfg,
                             const std::function<void(const CrossingState&)>& on_change = {});

// Event log CSV: timestamp,state,correlator,gamma,margin. Correlator fields
// are empty during warm-up.
void write_events_csv(const std::filesystem::path& file, const std::vector<DetectEvent>& events);
std::vector<DetectEvent> read_events_csv(const std::filesystem::path& file);

// Activity trace CSV: index,timestamp,activity,state.
void write_trace_csv(const std::filesystem::path& file, const ActivitySeries& series,
                     const std::vector<DetectEvent>* states = nullptr);

}  // namespace crossgap

#endif
