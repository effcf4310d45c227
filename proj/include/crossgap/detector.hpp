#ifndef CROSSGAP_DETECTOR_HPP
#define CROSSGAP_DETECTOR_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crossgap/activity.hpp"

namespace crossgap {

// Standard normal tail probability Q(x) = P(Z > x).
double q_func(double x);
// Inverse of q_func on (0, 1); bisection bracket refined by Newton steps.
double q_inv(double p);

struct DetectorConfig {
    double p_fa = 1e-3;          // target false-alarm probability per window, in (0, 0.5)
    double rate = 30.0;          // detector evaluations per second
    double release_ratio = 0.7;  // beta, in (0, 1]
    double hold_seconds = 1.5;   // required continuous sub-release time before GAP
};

enum class Crossing : std::uint8_t { kGap = 0, kTraffic = 1 };

inline const char* to_string(Crossing c) { return c == Crossing::kTraffic ? "TRAFFIC" : "GAP"; }

struct CrossingState {
    Crossing state = Crossing::kTraffic;
    double margin = 0.0;  // correlator minus threshold
    double timestamp = 0.0;
};

struct ThresholdSpec {
    double gamma = 0.0;   // decision level in activity^2 units
    double sigma = 0.0;
    double energy = 0.0;  // template sum of squares
    double p_fa = 0.0;
    double lambda = 0.0;  // LRT-equivalent multiplier, informational
};

// gamma = Qinv(p_fa) * sigma * sqrt(energy).
double np_threshold_gamma(double p_fa, double sigma, double energy);
ThresholdSpec np_threshold(const DetectorConfig& cfg, const NoiseModel& noise, const PulseTemplate& tpl);

// Correlation of the last-N activity window with the pulse template.
double correlate(std::span<const double> window, const PulseTemplate& tpl);

// Closed-form detection probability Q(Qinv(p_fa) - snr), snr = sqrt(energy)/sigma.
double predicted_pd(double p_fa, double snr);
double predicted_pd(const DetectorConfig& cfg, const NoiseModel& noise, const PulseTemplate& tpl);

// TRAFFIC/GAP state machine: matched-filter correlation over a sliding
// window against the Neyman-Pearson threshold, with hysteresis on release.
// Fail-safe: TRAFFIC until a full window of activity has been observed.
// step() calls must be serialized in timestamp order.
class Detector {
public:
    Detector(const DetectorConfig& cfg, PulseTemplate tpl, NoiseModel noise);

    CrossingState step(double activity_value, double timestamp);

    const CrossingState& state() const { return state_; }
    const ThresholdSpec& threshold() const { return threshold_; }
    const PulseTemplate& pulse_template() const { return template_; }
    bool warmed_up() const { return filled_ >= template_.size(); }
    // Last correlator output; meaningless before warm-up.
    double correlator() const { return correlator_; }

private:
    DetectorConfig cfg_;
    PulseTemplate template_;
    ThresholdSpec threshold_;
    std::vector<double> ring_;
    std::vector<double> window_;
    std::size_t head_ = 0;
    std::size_t filled_ = 0;
    double correlator_ = 0.0;
    std::optional<double> below_since_;
    CrossingState state_;
};

}  // namespace crossgap

#endif
