#include "crossgap/activity.hpp"

#include <algorithm>
#include <cmath>

#include "crossgap/errors.hpp"

namespace crossgap {

namespace {

constexpr double kMadToSigma = 1.4826;

void check_series(const ActivitySeries& s, std::size_t min_samples) {
    if (s.samples.size() < min_samples) throw DataError("activity series too short");
    for (std::size_t i = 1; i < s.samples.size(); ++i)
        if (s.samples[i].timestamp <= s.samples[i - 1].timestamp)
            throw DataError("activity timestamps must strictly increase");
}

}  // namespace

double median(std::vector<double> v) {
    if (v.empty()) throw DataError("median of empty set");
    std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

double compute_activity(const SparseFlow& flow, const SamplePointSet& points) {
    if (flow.points.size() != points.points.size())
        throw DataError("flow does not correspond to the sample point set");
    double a = 0.0;
    for (std::size_t i = 0; i < points.points.size(); ++i) {
        if (!flow.valid[i]) continue;
        a += points.proj[i].dx * flow.vectors[i].dx + points.proj[i].dy * flow.vectors[i].dy;
    }
    return a;
}

std::vector<std::size_t> find_salient_maxima(const ActivitySeries& series, double min_separation_s,
                                             double k_sal, double baseline_window_s) {
    check_series(series, 3);
    const auto& s = series.samples;
    const std::size_t n = s.size();

    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = s[i].value;

    double med = median(values);
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) dev[i] = std::fabs(values[i] - med);
    double robust_std = kMadToSigma * median(dev);

    // Running median over a centered window; two-pointer over timestamps.
    const double half = 0.5 * baseline_window_s;
    std::vector<double> baseline(n);
    std::size_t lo = 0, hi = 0;
    std::vector<double> win;
    for (std::size_t i = 0; i < n; ++i) {
        while (hi < n && s[hi].timestamp <= s[i].timestamp + half) ++hi;
        while (lo < n && s[lo].timestamp < s[i].timestamp - half) ++lo;
        win.assign(values.begin() + lo, values.begin() + hi);
        baseline[i] = median(std::move(win));
    }

    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (values[i] < values[i - 1] || values[i] < values[i + 1]) continue;
        if (values[i] > baseline[i] + k_sal * robust_std) candidates.push_back(i);
    }

    // Suppress neighbors: tallest first, keep if no kept maximum is closer
    // than min_separation in time.
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[candidates[a]] > values[candidates[b]];
    });
    std::vector<std::size_t> kept;
    for (std::size_t oi : order) {
        std::size_t idx = candidates[oi];
        bool clash = false;
        for (std::size_t k : kept) {
            if (std::fabs(s[k].timestamp - s[idx].timestamp) < min_separation_s) {
                clash = true;
                break;
            }
        }
        if (!clash) kept.push_back(idx);
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

PulseTemplate PulseTemplate::from_values(std::vector<double> values, double rate) {
    if (values.size() < 2) throw DataError("pulse template needs at least 2 samples");
    if (!(rate > 0.0)) throw DataError("pulse template rate must be > 0");
    PulseTemplate tpl;
    tpl.values = std::move(values);
    tpl.rate = rate;
    tpl.energy = 0.0;
    for (double v : tpl.values) tpl.energy += v * v;
    if (!(tpl.energy > 0.0)) throw DataError("pulse template has zero energy");
    tpl.peak_offset = std::max_element(tpl.values.begin(), tpl.values.end()) - tpl.values.begin();
    return tpl;
}

PulseTemplate extract_template(const ActivitySeries& series, const std::vector<std::size_t>& maxima,
                               std::size_t n, double peak_fraction) {
    check_series(series, 2);
    if (n < 2) throw DataError("template length must be >= 2");
    if (!(peak_fraction > 0.5 && peak_fraction < 1.0))
        throw DataError("peak fraction must lie in (0.5, 1)");
    if (maxima.size() < 3)
        throw DataError("too few salient maxima (" + std::to_string(maxima.size()) +
                        ") to build a pulse template; extend the training period");

    const std::size_t lead = static_cast<std::size_t>(std::lround(peak_fraction * static_cast<double>(n)));
    std::vector<const ActivitySample*> starts;
    for (std::size_t m : maxima) {
        // Window [m - lead + 1, m - lead + n]; discard windows that exit.
        if (m + 1 < lead) continue;
        std::size_t start = m + 1 - lead;
        if (start + n > series.samples.size()) continue;
        starts.push_back(&series.samples[start]);
    }
    if (starts.size() < 3)
        throw DataError("too few usable template windows; extend the training period");

    std::vector<double> tpl(n);
    std::vector<double> column(starts.size());
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t w = 0; w < starts.size(); ++w) column[w] = starts[w][j].value;
        tpl[j] = std::max(0.0, median(column));
    }
    PulseTemplate out = PulseTemplate::from_values(std::move(tpl), series.rate);
    if (out.peak_offset < (n + 1) / 2)
        throw DataError("template peak lies too early in the window; training data looks degenerate");
    return out;
}

NoiseModel estimate_noise(const ActivitySeries& series, const std::vector<std::size_t>& maxima,
                          double guard_s) {
    check_series(series, 2);
    std::vector<double> kept;
    kept.reserve(series.samples.size());
    for (std::size_t i = 0; i < series.samples.size(); ++i) {
        double t = series.samples[i].timestamp;
        bool excluded = false;
        for (std::size_t m : maxima) {
            if (std::fabs(t - series.samples[m].timestamp) <= guard_s) {
                excluded = true;
                break;
            }
        }
        if (!excluded) kept.push_back(series.samples[i].value);
    }
    if (kept.empty()) throw DataError("no samples left after excluding pulse regions");
    double med = median(kept);
    std::vector<double> dev(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) dev[i] = std::fabs(kept[i] - med);
    NoiseModel noise;
    noise.sigma = kMadToSigma * median(std::move(dev));
    noise.sample_count = kept.size();
    if (!(noise.sigma > 0.0))
        throw DataError("degenerate noise estimate (sigma = 0); extend the training period");
    return noise;
}

namespace {

// Shared grid: t_k = k / rate, from the first sample's time to the last.
std::vector<double> interp_to_grid(const std::vector<ActivitySample>& s, double rate,
                                   std::int64_t& k0_out) {
    const double eps = 1e-9;
    std::int64_t k0 = static_cast<std::int64_t>(std::ceil(s.front().timestamp * rate - eps));
    std::int64_t k1 = static_cast<std::int64_t>(std::floor(s.back().timestamp * rate + eps));
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, k1 - k0 + 1)));
    std::size_t seg = 0;
    for (std::int64_t k = k0; k <= k1; ++k) {
        double t = static_cast<double>(k) / rate;
        while (seg + 2 < s.size() && s[seg + 1].timestamp < t) ++seg;
        const auto& a = s[seg];
        const auto& b = s[seg + 1];
        double span = b.timestamp - a.timestamp;
        double lam = std::clamp((t - a.timestamp) / span, 0.0, 1.0);
        out.push_back(a.value + lam * (b.value - a.value));
    }
    k0_out = k0;
    return out;
}

}  // namespace

ActivitySeries resample(const ActivitySeries& series, double target_rate) {
    if (!(target_rate > 0.0)) throw DataError("target rate must be > 0");
    check_series(series, 2);
    std::int64_t k0 = 0;
    std::vector<double> values = interp_to_grid(series.samples, target_rate, k0);
    ActivitySeries out;
    out.rate = target_rate;
    out.samples.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::int64_t k = k0 + static_cast<std::int64_t>(i);
        out.samples.push_back({k, static_cast<double>(k) / target_rate, values[i]});
    }
    return out;
}

PulseTemplate resample(const PulseTemplate& tpl, double target_rate) {
    if (!(target_rate > 0.0)) throw DataError("target rate must be > 0");
    if (tpl.values.size() < 2) throw DataError("template too short to resample");
    if (target_rate == tpl.rate) return tpl;
    ActivitySeries s;
    s.rate = tpl.rate;
    for (std::size_t i = 0; i < tpl.values.size(); ++i)
        s.samples.push_back({static_cast<std::int64_t>(i), static_cast<double>(i) / tpl.rate, tpl.values[i]});
    std::int64_t k0 = 0;
    std::vector<double> values = interp_to_grid(s.samples, target_rate, k0);
    return PulseTemplate::from_values(std::move(values), target_rate);
}

OnlineResampler::OnlineResampler(double rate) : rate_(rate) {
    if (!(rate > 0.0)) throw DataError("resampler rate must be > 0");
}

void OnlineResampler::push(double t, double value, std::vector<ActivitySample>& out) {
    const double eps = 1e-9;
    if (!primed_) {
        primed_ = true;
        next_k_ = static_cast<std::int64_t>(std::ceil(t * rate_ - eps));
        if (static_cast<double>(next_k_) / rate_ <= t + eps) {
            out.push_back({next_k_, static_cast<double>(next_k_) / rate_, value});
            ++next_k_;
        }
        last_t_ = t;
        last_v_ = value;
        return;
    }
    if (t <= last_t_) throw DataError("resampler input timestamps must strictly increase");
    while (static_cast<double>(next_k_) / rate_ <= t + eps) {
        double tk = static_cast<double>(next_k_) / rate_;
        double lam = std::clamp((tk - last_t_) / (t - last_t_), 0.0, 1.0);
        out.push_back({next_k_, tk, last_v_ + lam * (value - last_v_)});
        ++next_k_;
    }
    last_t_ = t;
    last_v_ = value;
}

}  // namespace crossgap
