#ifndef CROSSGAP_ACTIVITY_HPP
#define CROSSGAP_ACTIVITY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "crossgap/influx.hpp"
#include "crossgap/optflow.hpp"

namespace crossgap {

struct ActivitySample {
    std::int64_t index = 0;
    double timestamp = 0.0;
    double value = 0.0;
};

struct ActivitySeries {
    std::vector<ActivitySample> samples;
    double rate = 0.0;  // nominal samples/second
};

// The scalar Activity value: sum over valid sample points of the dot product
// between the effective projection vector (w*m) and the measured flow.
// Invalid tracks contribute zero. Flow points must match the sample set.
double compute_activity(const SparseFlow& flow, const SamplePointSet& points);

// Local maxima exceeding a running-median baseline (60 s window) by
// k_sal * robust std (1.4826 * MAD of the whole series). Maxima closer than
// min_separation keep only the largest.
std::vector<std::size_t> find_salient_maxima(const ActivitySeries& series, double min_separation_s,
                                             double k_sal = 6.0, double baseline_window_s = 60.0);

// Canonical single-vehicle activity waveform.
struct PulseTemplate {
    std::vector<double> values;
    double rate = 0.0;
    double energy = 0.0;          // sum of squares, cached
    std::size_t peak_offset = 0;  // index of the maximum within the window

    static PulseTemplate from_values(std::vector<double> values, double rate);
    std::size_t size() const { return values.size(); }
};

// Element-wise median of length-n windows placed so that a peak_fraction
// share of each window precedes its maximum; negative medians floor at 0.
// Needs >= 3 usable maxima.
PulseTemplate extract_template(const ActivitySeries& series, const std::vector<std::size_t>& maxima,
                               std::size_t n, double peak_fraction);

struct NoiseModel {
    double sigma = 0.0;  // std of gap-state activity noise
    std::string method = "robust-mad";
    std::size_t sample_count = 0;
};

// Robust sigma (1.4826 * MAD) of the series with +-guard seconds around each
// maximum excluded.
NoiseModel estimate_noise(const ActivitySeries& series, const std::vector<std::size_t>& maxima,
                          double guard_s);

// Linear interpolation onto the uniform grid k / target_rate covering the
// input's time span; no extrapolation beyond the endpoints.
ActivitySeries resample(const ActivitySeries& series, double target_rate);
PulseTemplate resample(const PulseTemplate& tpl, double target_rate);

// Streaming version of resample() for the online pipeline: push() appends
// every grid sample that becomes determined by the new input sample.
class OnlineResampler {
public:
    explicit OnlineResampler(double rate);
    void push(double t, double value, std::vector<ActivitySample>& out);

private:
    double rate_;
    std::int64_t next_k_ = 0;
    bool primed_ = false;
    double last_t_ = 0.0;
    double last_v_ = 0.0;
};

// Median of a copy of v (n-th element selection); v must be nonempty.
double median(std::vector<double> v);

}  // namespace crossgap

#endif
