#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "crossgap/detector.hpp"
#include "crossgap/errors.hpp"

using namespace crossgap;

namespace {

// Independent oracle: composite-Simpson integration of the standard normal
// density over [x, 40].
double q_oracle(double x) {
    auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
    const double hi = 40.0;
    const int steps = 200000;  // even
    const double h = (hi - x) / steps;
    double acc = pdf(x) + pdf(hi);
    for (int i = 1; i < steps; ++i) acc += pdf(x + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

PulseTemplate gaussian_template(std::size_t n, double rate, double amp) {
    std::vector<double> v(n);
    double peak = 0.8 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = (static_cast<double>(i) - peak) / (0.22 * static_cast<double>(n));
        v[i] = amp * std::exp(-d * d);
    }
    return PulseTemplate::from_values(std::move(v), rate);
}

NoiseModel noise_of(double sigma) {
    NoiseModel n;
    n.sigma = sigma;
    n.sample_count = 1000;
    return n;
}

std::vector<Crossing> run_sequence(Detector& det, const std::vector<double>& values, double rate) {
    std::vector<Crossing> states;
    states.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        states.push_back(det.step(values[i], static_cast<double>(i) / rate).state);
    return states;
}

}  // namespace

TEST_CASE("q_func: symmetry and oracle values") {
    CHECK(q_func(0.0) == doctest::Approx(0.5).epsilon(1e-12));
    for (double x : {0.3, 1.0, 2.5, 4.0}) CHECK(q_func(x) + q_func(-x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(q_func(1.6448536) - 0.05) < 1e-6);
    for (double x : {-3.0, -1.0, 0.5, 2.0, 5.5}) CHECK(std::fabs(q_func(x) - q_oracle(x)) < 1e-9);
}

TEST_CASE("q_inv: round trips and oracle value") {
    CHECK(std::fabs(q_inv(0.5)) < 1e-9);
    CHECK(q_inv(q_func(2.0)) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(q_func(q_inv(0.123)) == doctest::Approx(0.123).epsilon(1e-9));
    CHECK(q_inv(0.05) == doctest::Approx(1.6449).epsilon(1e-4));
    for (double p : {1e-9, 1e-6, 1e-3, 0.25, 0.75, 1.0 - 1e-6})
        CHECK(std::fabs(q_func(q_inv(p)) - p) <= 1e-7 * std::max(1.0, p));
    CHECK_THROWS_AS(q_inv(0.0), DataError);
    CHECK_THROWS_AS(q_inv(1.0), DataError);
}

TEST_CASE("np_threshold: formula and scaling") {
    CHECK(np_threshold_gamma(0.5, 2.0, 9.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(np_threshold_gamma(0.05, 1.0, 1.0) == doctest::Approx(1.6449).epsilon(1e-4));
    // Doubling the template amplitude doubles sqrt(energy) and gamma.
    double g1 = np_threshold_gamma(0.01, 1.5, 100.0);
    double g2 = np_threshold_gamma(0.01, 1.5, 400.0);
    CHECK(g2 == doctest::Approx(2.0 * g1).epsilon(1e-12));

    auto tpl = gaussian_template(150, 30.0, 2.0);
    DetectorConfig cfg;
    cfg.p_fa = 0.01;
    auto spec = np_threshold(cfg, noise_of(0.7), tpl);
    CHECK(spec.gamma == doctest::Approx(q_inv(0.01) * 0.7 * std::sqrt(tpl.energy)).epsilon(1e-12));
    CHECK(spec.lambda ==
          doctest::Approx(std::exp((2.0 * spec.gamma - tpl.energy) / (2.0 * 0.49))).epsilon(1e-9));
    CHECK_THROWS_AS(np_threshold_gamma(0.01, 0.0, 1.0), DataError);
}

TEST_CASE("correlate equals the naive dot product") {
    auto tpl = gaussian_template(64, 30.0, 1.3);
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<double> window(64);
    for (int rep = 0; rep < 200; ++rep) {
        for (auto& v : window) v = g(rng);
        double naive = 0.0;
        for (std::size_t i = 0; i < window.size(); ++i) naive += window[i] * tpl.values[i];
        CHECK(correlate(window, tpl) == doctest::Approx(naive).epsilon(1e-12));
    }
    // Window = template gives the energy; zeros give zero.
    CHECK(correlate(tpl.values, tpl) == doctest::Approx(tpl.energy).epsilon(1e-12));
    std::vector<double> zeros(64, 0.0);
    CHECK(correlate(zeros, tpl) == 0.0);
    std::vector<double> bad(10, 0.0);
    CHECK_THROWS_AS(correlate(bad, tpl), DataError);
}

TEST_CASE("predicted_pd: limits and closed form") {
    CHECK(predicted_pd(0.05, 0.0) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(predicted_pd(0.05, 3.0) == doctest::Approx(q_func(q_inv(0.05) - 3.0)).epsilon(1e-12));
    CHECK(predicted_pd(0.05, 3.0) == doctest::Approx(0.9125).epsilon(2e-4));
}

TEST_CASE("monte carlo matches the closed forms") {
    const std::size_t n = 100;
    auto tpl = gaussian_template(n, 30.0, 1.0);
    const double snr = 3.0;
    const double sigma = std::sqrt(tpl.energy) / snr;
    const double p_fa = 0.01;
    const double gamma = np_threshold_gamma(p_fa, sigma, tpl.energy);

    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<double> window(n);
    int fa = 0, det = 0;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        for (auto& v : window) v = g(rng);
        if (correlate(window, tpl) > gamma) ++fa;
        for (std::size_t i = 0; i < n; ++i) window[i] += tpl.values[i];
        if (correlate(window, tpl) > gamma) ++det;
    }
    double fa_rate = static_cast<double>(fa) / trials;
    double det_rate = static_cast<double>(det) / trials;
    CHECK(fa_rate > p_fa / 3.0);
    CHECK(fa_rate < 3.0 * p_fa);
    CHECK(std::fabs(det_rate - predicted_pd(p_fa, snr)) < 0.02);
}

TEST_CASE("normalized decision form is equivalent") {
    auto tpl = gaussian_template(80, 30.0, 0.9);
    const double sigma = 1.3, p_fa = 0.05;
    const double gamma = np_threshold_gamma(p_fa, sigma, tpl.energy);
    const double rhs = q_inv(p_fa) * sigma;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 2.0);
    std::vector<double> window(80);
    for (int t = 0; t < 5000; ++t) {
        for (auto& v : window) v = g(rng);
        double y = correlate(window, tpl);
        CHECK((y > gamma) == (y / std::sqrt(tpl.energy) > rhs));
    }
}

TEST_CASE("detector state machine") {
    const double rate = 30.0;
    auto tpl = gaussian_template(60, rate, 2.0);  // 2 s window
    DetectorConfig cfg;
    cfg.p_fa = 1e-3;
    cfg.rate = rate;
    cfg.release_ratio = 0.7;
    cfg.hold_seconds = 1.0;
    const double sigma = 0.05;

    SUBCASE("fail-safe warm-up, then GAP on silence with margin -gamma") {
        Detector det(cfg, tpl, noise_of(sigma));
        const double gamma = det.threshold().gamma;
        std::vector<double> zeros(300, 0.0);
        auto states = run_sequence(det, zeros, rate);
        for (std::size_t i = 0; i + 1 < tpl.size(); ++i) CHECK(states[i] == Crossing::kTraffic);
        CHECK(states.back() == Crossing::kGap);
        CHECK(det.state().margin == doctest::Approx(-gamma).epsilon(1e-12));
        // Release happened only after the hold elapsed past warm-up.
        std::size_t first_gap = 0;
        while (states[first_gap] == Crossing::kTraffic) ++first_gap;
        CHECK(first_gap >= tpl.size() - 1 + static_cast<std::size_t>(cfg.hold_seconds * rate));
    }

    SUBCASE("replayed template trips TRAFFIC at or before its peak") {
        Detector det(cfg, tpl, noise_of(sigma));
        std::vector<double> feed(400, 0.0);
        const std::size_t start = 300;
        for (std::size_t i = 0; i < tpl.size(); ++i) feed[start + i] = tpl.values[i];
        auto states = run_sequence(det, feed, rate);
        std::size_t onset = 0;
        for (std::size_t i = start; i < feed.size(); ++i) {
            if (states[i] == Crossing::kTraffic) {
                onset = i;
                break;
            }
        }
        REQUIRE(onset > 0);
        CHECK(onset <= start + tpl.peak_offset);
    }

    SUBCASE("hysteresis: oscillation above the release level holds TRAFFIC") {
        Detector det(cfg, tpl, noise_of(sigma));
        const double gamma = det.threshold().gamma;
        // Find window values w such that correlate(w, tpl) hits the wanted level:
        // feed a constant c; correlator = c * sum(tpl).
        double tsum = 0.0;
        for (double v : tpl.values) tsum += v;
        double warm = 1.01 * gamma / tsum, cool = 0.9 * gamma / tsum;
        for (int i = 0; i < 200; ++i) det.step(warm, i / rate);
        CHECK(det.state().state == Crossing::kTraffic);
        // Oscillate between 1.01 and 0.9 gamma; with beta = 0.7 never released.
        for (int i = 200; i < 800; ++i) det.step((i % 2 != 0) ? warm : cool, i / rate);
        CHECK(det.state().state == Crossing::kTraffic);
        // Dropping to zero releases after the hold.
        for (int i = 800; i < 1000; ++i) det.step(0.0, i / rate);
        CHECK(det.state().state == Crossing::kGap);
    }

    SUBCASE("decision is invariant under common scaling") {
        std::mt19937_64 rng(31);
        std::normal_distribution<double> g(0.0, sigma);
        std::vector<double> feed(900);
        for (auto& v : feed) v = g(rng);
        for (std::size_t i = 0; i < tpl.size(); ++i) feed[400 + i] += tpl.values[i];

        Detector base(cfg, tpl, noise_of(sigma));
        auto s1 = run_sequence(base, feed, rate);

        const double c = 37.5;
        PulseTemplate scaled_tpl = tpl;
        for (auto& v : scaled_tpl.values) v *= c;
        scaled_tpl = PulseTemplate::from_values(scaled_tpl.values, rate);
        std::vector<double> scaled_feed = feed;
        for (auto& v : scaled_feed) v *= c;
        Detector scaled(cfg, scaled_tpl, noise_of(sigma * c));
        auto s2 = run_sequence(scaled, scaled_feed, rate);
        CHECK(s1 == s2);
    }

    SUBCASE("raising p_fa never delays the first onset") {
        std::mt19937_64 rng(77);
        std::normal_distribution<double> g(0.0, sigma);
        std::vector<double> feed(900);
        for (auto& v : feed) v = g(rng);
        for (std::size_t i = 0; i < tpl.size(); ++i) feed[500 + i] += 0.4 * tpl.values[i];

        auto first_onset = [&](double p_fa) {
            DetectorConfig c2 = cfg;
            c2.p_fa = p_fa;
            Detector det(c2, tpl, noise_of(sigma));
            auto states = run_sequence(det, feed, rate);
            for (std::size_t i = 1; i < states.size(); ++i)
                if (states[i] == Crossing::kTraffic && states[i - 1] == Crossing::kGap) return i;
            return states.size();
        };
        std::size_t loose = first_onset(1e-2);
        std::size_t tight = first_onset(1e-4);
        CHECK(loose <= tight);
    }

    SUBCASE("no GAP before a full window") {
        Detector det(cfg, tpl, noise_of(sigma));
        for (std::size_t i = 0; i + 1 < tpl.size(); ++i) {
            auto st = det.step(0.0, i / rate);
            CHECK(st.state == Crossing::kTraffic);
            CHECK_FALSE(det.warmed_up());
        }
    }

    SUBCASE("template is resampled when the config rate differs") {
        DetectorConfig c2 = cfg;
        c2.rate = 60.0;
        Detector det(c2, tpl, noise_of(sigma));
        CHECK(det.pulse_template().rate == 60.0);
        CHECK(det.pulse_template().size() > tpl.size());
    }
}

TEST_CASE("detector config validation") {
    auto tpl = gaussian_template(30, 30.0, 1.0);
    DetectorConfig cfg;
    cfg.p_fa = 0.6;
    CHECK_THROWS_AS(Detector(cfg, tpl, noise_of(1.0)), DataError);
    cfg.p_fa = 1e-3;
    cfg.release_ratio = 0.0;
    CHECK_THROWS_AS(Detector(cfg, tpl, noise_of(1.0)), DataError);
    cfg.release_ratio = 0.7;
    CHECK_THROWS_AS(Detector(cfg, tpl, noise_of(0.0)), DataError);
}
