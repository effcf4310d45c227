#include "crossgap/detector.hpp"

#include <cmath>

#include "crossgap/errors.hpp"

namespace crossgap {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

void check_config(const DetectorConfig& cfg) {
    if (!(cfg.p_fa > 0.0 && cfg.p_fa < 0.5)) throw DataError("p_fa must lie in (0, 0.5)");
    if (!(cfg.rate > 0.0)) throw DataError("detector rate must be > 0");
    if (!(cfg.release_ratio > 0.0 && cfg.release_ratio <= 1.0))
        throw DataError("release ratio must lie in (0, 1]");
    if (cfg.hold_seconds < 0.0) throw DataError("hold must be >= 0");
}

}  // namespace

double q_func(double x) {
    if (std::isnan(x)) throw DataError("q_func requires finite input");
    return 0.5 * std::erfc(x * kInvSqrt2);
}

double q_inv(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DataError("q_inv domain is (0, 1)");
    // Bisection: Q is strictly decreasing, Q(-40) ~ 1, Q(40) ~ 0.
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 100; ++i) {
        double mid = 0.5 * (lo + hi);
        if (q_func(mid) > p)
            lo = mid;
        else
            hi = mid;
    }
    double x = 0.5 * (lo + hi);
    // Newton polish on Q(x) - p (Q' = -pdf).
    for (int i = 0; i < 4; ++i) {
        double pdf = std_normal_pdf(x);
        if (pdf <= 0.0) break;
        double step = (q_func(x) - p) / pdf;
        if (!std::isfinite(step)) break;
        x += step;
    }
    return x;
}

double np_threshold_gamma(double p_fa, double sigma, double energy) {
    if (!(p_fa > 0.0 && p_fa < 1.0)) throw DataError("p_fa must lie in (0, 1)");
    if (!(sigma > 0.0)) throw DataError("noise sigma must be > 0");
    if (!(energy > 0.0)) throw DataError("template energy must be > 0");
    return q_inv(p_fa) * sigma * std::sqrt(energy);
}

ThresholdSpec np_threshold(const DetectorConfig& cfg, const NoiseModel& noise, const PulseTemplate& tpl) {
    check_config(cfg);
    ThresholdSpec spec;
    spec.gamma = np_threshold_gamma(cfg.p_fa, noise.sigma, tpl.energy);
    spec.sigma = noise.sigma;
    spec.energy = tpl.energy;
    spec.p_fa = cfg.p_fa;
    // Informational: LRT multiplier the gamma corresponds to.
    spec.lambda = std::exp((2.0 * spec.gamma - spec.energy) / (2.0 * noise.sigma * noise.sigma));
    return spec;
}

double correlate(std::span<const double> window, const PulseTemplate& tpl) {
    if (window.size() != tpl.values.size())
        throw DataError("correlation window length does not match template");
    double y = 0.0;
    for (std::size_t i = 0; i < window.size(); ++i) y += window[i] * tpl.values[i];
    return y;
}

double predicted_pd(double p_fa, double snr) {
    if (!(p_fa > 0.0 && p_fa < 1.0)) throw DataError("p_fa must lie in (0, 1)");
    if (snr < 0.0) throw DataError("snr must be >= 0");
    return q_func(q_inv(p_fa) - snr);
}

double predicted_pd(const DetectorConfig& cfg, const NoiseModel& noise, const PulseTemplate& tpl) {
    if (!(noise.sigma > 0.0)) throw DataError("noise sigma must be > 0");
    return predicted_pd(cfg.p_fa, std::sqrt(tpl.energy) / noise.sigma);
}

Detector::Detector(const DetectorConfig& cfg, PulseTemplate tpl, NoiseModel noise)
    : cfg_(cfg), template_(std::move(tpl)) {
    check_config(cfg_);
    if (template_.rate != cfg_.rate) template_ = resample(template_, cfg_.rate);
    threshold_ = np_threshold(cfg_, noise, template_);
    ring_.assign(template_.size(), 0.0);
    window_.assign(template_.size(), 0.0);
    state_ = {Crossing::kTraffic, 0.0, 0.0};  // fail closed until warm
}

CrossingState Detector::step(double activity_value, double timestamp) {
    const std::size_t n = template_.size();
    ring_[head_] = activity_value;
    head_ = (head_ + 1) % n;
    if (filled_ < n) ++filled_;

    if (filled_ < n) {
        state_ = {Crossing::kTraffic, 0.0, timestamp};
        return state_;
    }

    // Oldest-first window; head_ points at the oldest slot after insertion.
    for (std::size_t i = 0; i < n; ++i) window_[i] = ring_[(head_ + i) % n];
    correlator_ = correlate(window_, template_);
    const double gamma = threshold_.gamma;
    double margin = correlator_ - gamma;

    Crossing next = state_.state;
    if (state_.state == Crossing::kGap) {
        if (correlator_ > gamma) {
            next = Crossing::kTraffic;
            below_since_.reset();
        }
    } else {
        if (correlator_ < cfg_.release_ratio * gamma) {
            if (!below_since_) below_since_ = timestamp;
            if (timestamp - *below_since_ >= cfg_.hold_seconds) {
                next = Crossing::kGap;
                below_since_.reset();
            }
        } else {
            below_since_.reset();
        }
    }

    state_ = {next, margin, timestamp};
    return state_;
}

}  // namespace crossgap
