#ifndef CROSSGAP_MODEL_HPP
#define CROSSGAP_MODEL_HPP

#include <cstdint>
#include <filesystem>

#include "crossgap/activity.hpp"
#include "crossgap/influx.hpp"
#include "crossgap/optflow.hpp"

namespace crossgap {

// Training knobs, echoed into the model file.
struct TrainParams {
    int stride = 4;                 // influx grid stride, px
    int skip = 4;                   // frame-skip factor for training flow
    bool two_way = false;           // nullify outbound motion when set
    double alpha = 4.0;             // intensification gain
    double rho_frac = 0.05;         // intensification radius, fraction of image diagonal
    double sigma_s_frac = 0.20;     // sampling std, fraction of image diagonal
    int sample_count = 2000;
    std::uint64_t seed = 1;
    double detector_rate = 30.0;    // template/rate of the matched filter
    double template_seconds = 5.0;  // window length
    double peak_fraction = 0.8;     // share of window preceding the peak
    double k_sal = 6.0;
    double min_separation = 8.0;    // seconds between training maxima
    double guard = 10.0;            // exclusion half-width for noise estimation
    double backtrack_eps = 0.05;    // source-localization stop threshold
    double min_duration = 600.0;    // required training footage, seconds
    FlowParams flow;
};

// Everything one installation learns: the influx map, the online sample
// points, the pulse template and the noise level.
struct TrainedModel {
    int format_version = 1;
    int image_width = 0;
    int image_height = 0;
    double fps = 8.0;
    InfluxMap influx;
    SamplePointSet points;
    PulseTemplate tpl;
    NoiseModel noise;
    TrainParams config;
};

// Rounds to 9 significant digits; the serialization granularity.
double round9(double v);

// Versioned single-document JSON. Floats are stored at 9 significant digits;
// a reload reproduces activity computations to ~1e-9 relative.
void save_model(const std::filesystem::path& file, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& file);

}  // namespace crossgap

#endif
