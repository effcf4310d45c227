#ifndef CROSSGAP_EVAL_HPP
#define CROSSGAP_EVAL_HPP

#include <filesystem>
#include <vector>

#include "crossgap/pipeline.hpp"
#include "crossgap/simgen.hpp"

namespace crossgap {

struct VehicleOutcome {
    int id = 0;
    double arrival = 0.0;
    bool detected = false;
    double onset = 0.0;    // matched TRAFFIC onset time
    double warning = 0.0;  // arrival - onset
};

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct RocPoint {
    double gamma = 0.0;
    double p_fa = 0.0;  // fraction of out-of-pulse steps above gamma
    double p_d = 0.0;   // fraction of vehicles whose window peak exceeds gamma
};

struct EvalReport {
    std::vector<VehicleOutcome> vehicles;
    std::vector<double> false_alarm_onsets;  // onsets matched to no vehicle
    std::size_t detections = 0;
    std::size_t misses = 0;
    std::size_t false_alarms = 0;
    double false_alarm_rate_per_hour = 0.0;
    double duration = 0.0;
    std::vector<HistogramBin> histogram;  // advance warning times, 1 s bins
    std::vector<RocPoint> roc;
};

// Matches GAP->TRAFFIC onsets to ground-truth vehicles: each onset, in time
// order, claims the earliest unmatched vehicle whose arrival it precedes.
// Unmatched onsets are false alarms; unmatched vehicles are misses. The ROC
// sweeps gamma over the recorded correlator range against visibility-window
// labels. Throws DataError when truth is empty but events carry onsets.
EvalReport evaluate(const std::vector<DetectEvent>& events, const GroundTruth& truth);

void write_report_json(const std::filesystem::path& file, const EvalReport& report);
void write_hist_csv(const std::filesystem::path& file, const EvalReport& report);
void write_roc_csv(const std::filesystem::path& file, const EvalReport& report);

}  // namespace crossgap

#endif
