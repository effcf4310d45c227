#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "crossgap/errors.hpp"
#include "crossgap/influx.hpp"

using namespace crossgap;

namespace {

DenseFlowField make_field(const InfluxMap& map, FlowVector v, std::int64_t from = 0) {
    DenseFlowField f;
    f.stride = map.stride;
    f.offset = map.offset;
    f.grid_width = map.grid_width;
    f.grid_height = map.grid_height;
    f.frame_from = from;
    f.frame_to = from + 1;
    f.vectors.assign(map.m.size(), v);
    f.valid.assign(map.m.size(), 1);
    return f;
}

// Radial source field: vectors point away from src, magnitude grows with
// distance as sqrt(r / r_max).
InfluxMap radial_map(int w, int h, int stride, std::array<double, 2> src) {
    InfluxMap map = make_influx_map(w, h, stride);
    double rmax = std::hypot(double(w), double(h));
    for (int gy = 0; gy < map.grid_height; ++gy) {
        for (int gx = 0; gx < map.grid_width; ++gx) {
            auto p = map.node_pos(gx, gy);
            double dx = p[0] - src[0];
            double dy = p[1] - src[1];
            double r = std::hypot(dx, dy);
            if (r < 1e-9) continue;
            double mag = std::sqrt(r / rmax);
            map.at(gx, gy) = {mag * dx / r, mag * dy / r};
        }
    }
    map.frames_trained = 1;
    return map;
}

}  // namespace

TEST_CASE("accumulate: running mean, counts, cancellation") {
    InfluxMap map = make_influx_map(40, 24, 4);
    auto f = make_field(map, {0.5, 1.25});

    SUBCASE("single field reproduces itself") {
        accumulate(map, f);
        CHECK(map.frames_trained == 1);
        for (const auto& v : map.m) {
            CHECK(v.dx == 0.5);
            CHECK(v.dy == 1.25);
        }
    }

    SUBCASE("F and -F cancel") {
        accumulate(map, f);
        auto g = make_field(map, {-0.5, -1.25}, 1);
        accumulate(map, g);
        for (const auto& v : map.m) {
            CHECK(v.dx == doctest::Approx(0.0).epsilon(1e-15));
            CHECK(v.dy == doctest::Approx(0.0).epsilon(1e-15));
        }
    }

    SUBCASE("constant field over 100 rounds is bit-stable") {
        for (int i = 0; i < 100; ++i) accumulate(map, f);
        CHECK(map.frames_trained == 100);
        for (const auto& v : map.m) {
            CHECK(std::fabs(v.dx - 0.5) <= 1e-9);
            CHECK(std::fabs(v.dy - 1.25) <= 1e-9);
        }
    }

    SUBCASE("invalid tracks are excluded per cell") {
        auto g = make_field(map, {10.0, 10.0}, 1);
        g.valid[0] = 0;
        accumulate(map, f);
        accumulate(map, g);
        CHECK(map.m[0].dx == 0.5);  // only the first sample landed in cell 0
        CHECK(map.counts[0] == 1);
        CHECK(map.m[1].dx == doctest::Approx(5.25));
        CHECK(map.counts[1] == 2);
    }

    SUBCASE("geometry mismatch is an error") {
        InfluxMap other = make_influx_map(40, 24, 8);
        CHECK_THROWS_AS(accumulate(other, f), DataError);
    }
}

TEST_CASE("averaging linearity against direct summation") {
    InfluxMap map = make_influx_map(32, 32, 4);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::uniform_int_distribution<int> coin(0, 3);
    std::vector<double> sum(map.m.size() * 2, 0.0);
    std::vector<int> cnt(map.m.size(), 0);
    for (int t = 0; t < 37; ++t) {
        DenseFlowField f = make_field(map, {0, 0}, t);
        for (std::size_t i = 0; i < f.vectors.size(); ++i) {
            if (coin(rng) == 0) {
                f.valid[i] = 0;
                f.vectors[i] = {0, 0};
                continue;
            }
            f.vectors[i] = {u(rng), u(rng)};
            sum[2 * i] += f.vectors[i].dx;
            sum[2 * i + 1] += f.vectors[i].dy;
            ++cnt[i];
        }
        accumulate(map, f);
    }
    for (std::size_t i = 0; i < map.m.size(); ++i) {
        if (cnt[i] == 0) {
            CHECK(map.m[i].dx == 0.0);
            continue;
        }
        CHECK(map.m[i].dx == doctest::Approx(sum[2 * i] / cnt[i]).epsilon(1e-12));
        CHECK(map.m[i].dy == doctest::Approx(sum[2 * i + 1] / cnt[i]).epsilon(1e-12));
    }
}

TEST_CASE("nullify_outbound: sign rule and idempotence") {
    InfluxMap map = make_influx_map(16, 16, 4);
    map.frames_trained = 1;
    map.at(0, 0) = {3.0, -2.0};
    map.at(1, 0) = {3.0, 2.0};
    map.at(2, 0) = {5.0, 0.0};
    nullify_outbound(map);
    CHECK(map.at(0, 0).dx == 0.0);
    CHECK(map.at(0, 0).dy == 0.0);
    CHECK(map.at(1, 0).dx == 3.0);
    CHECK(map.at(2, 0).dx == 5.0);  // dy = 0 is not upward
    CHECK(map.nullified_outbound);

    InfluxMap copy = map;
    nullify_outbound(map);
    for (std::size_t i = 0; i < map.m.size(); ++i) {
        CHECK(map.m[i].dx == copy.m[i].dx);
        CHECK(map.m[i].dy == copy.m[i].dy);
    }
    for (const auto& v : map.m) CHECK(v.dy >= 0.0);
}

TEST_CASE("locate_pfa: radial source field") {
    std::array<double, 2> src{150.0, 40.0};
    InfluxMap map = radial_map(320, 180, 4, src);
    auto pfa = locate_pfa(map);
    CHECK(std::hypot(pfa[0] - src[0], pfa[1] - src[1]) <= map.stride);
}

TEST_CASE("locate_pfa: uniform field stops on the upstream border") {
    InfluxMap map = make_influx_map(160, 120, 4);
    for (auto& v : map.m) v = {0.0, 1.0};  // downward flow, source at the top edge
    map.frames_trained = 1;
    auto pfa = locate_pfa(map);
    CHECK(pfa[1] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("locate_pfa: single nonzero cell resolves within one stride") {
    InfluxMap map = make_influx_map(64, 64, 4);
    map.frames_trained = 1;
    map.at(8, 8) = {0.0, 1.0};
    auto node = map.node_pos(8, 8);
    auto pfa = locate_pfa(map);
    CHECK(std::hypot(pfa[0] - node[0], pfa[1] - node[1]) <= map.stride + 1e-9);
}

TEST_CASE("locate_pfa: translation equivariance") {
    std::array<double, 2> a{120.0, 60.0};
    std::array<double, 2> b{160.0, 84.0};  // shifted by (40, 24)
    auto pa = locate_pfa(radial_map(320, 180, 4, a));
    auto pb = locate_pfa(radial_map(320, 180, 4, b));
    CHECK(std::hypot(pb[0] - pa[0] - 40.0, pb[1] - pa[1] - 24.0) <= 4.0);
}

TEST_CASE("locate_pfa: all-zero map is an error") {
    InfluxMap map = make_influx_map(32, 32, 4);
    map.frames_trained = 1;
    CHECK_THROWS_AS(locate_pfa(map), DataError);
}

TEST_CASE("intensify: closed forms and direction preservation") {
    InfluxMap map = make_influx_map(64, 48, 4);
    map.frames_trained = 1;
    for (auto& v : map.m) v = {0.3, 0.7};
    std::array<double, 2> pfa{32.0, 12.0};

    SUBCASE("alpha = 0 leaves weights at 1") {
        intensify(map, pfa, 0.0, 10.0);
        for (double w : map.weights) CHECK(w == doctest::Approx(1.0));
    }

    SUBCASE("closed-form values") {
        double alpha = 4.0, rho = 10.0;
        intensify(map, pfa, alpha, rho);
        int gx, gy;
        REQUIRE(map.cell_of(pfa[0], pfa[1], gx, gy));
        CHECK(map.weights[gy * map.grid_width + gx] == doctest::Approx(1.0 + alpha));
        // At distance rho * sqrt(2 ln 2) the boost halves.
        double d = rho * std::sqrt(2.0 * std::log(2.0));
        double w = 1.0 + alpha * std::exp(-d * d / (2 * rho * rho));
        CHECK(w == doctest::Approx(1.0 + alpha / 2.0));
        // Weight max is attained at the node nearest the pfa.
        std::size_t best = std::max_element(map.weights.begin(), map.weights.end()) - map.weights.begin();
        CHECK(best == static_cast<std::size_t>(gy) * map.grid_width + gx);
    }

    SUBCASE("w*m is a positive multiple of m; argmax moves toward pfa") {
        intensify(map, pfa, 6.0, 8.0);
        for (std::size_t i = 0; i < map.m.size(); ++i) {
            CHECK(map.weights[i] >= 1.0);
            FlowVector wm{map.m[i].dx * map.weights[i], map.m[i].dy * map.weights[i]};
            CHECK(wm.dx * map.m[i].dy == doctest::Approx(wm.dy * map.m[i].dx));  // parallel
            CHECK(wm.dx * map.m[i].dx + wm.dy * map.m[i].dy >= 0.0);             // same direction
        }
        // With uniform |m|, the largest |w*m| sits at the pfa cell.
        double best_mag = -1.0;
        std::size_t best = 0;
        for (std::size_t i = 0; i < map.m.size(); ++i) {
            double mag = map.weights[i] * std::hypot(map.m[i].dx, map.m[i].dy);
            if (mag > best_mag) {
                best_mag = mag;
                best = i;
            }
        }
        auto p = map.node_pos(static_cast<int>(best % map.grid_width),
                              static_cast<int>(best / map.grid_width));
        CHECK(std::hypot(p[0] - pfa[0], p[1] - pfa[1]) <= map.stride);
    }
}

TEST_CASE("sample_points: determinism, support, concentration") {
    InfluxMap map = make_influx_map(320, 180, 4);
    map.frames_trained = 1;
    for (auto& v : map.m) v = {0.0, 0.5};
    std::array<double, 2> pfa{160.0, 20.0};
    intensify(map, pfa, 4.0, 18.0);

    SUBCASE("same seed twice gives identical sets") {
        auto a = sample_points(map, 500, 70.0, 99);
        auto b = sample_points(map, 500, 70.0, 99);
        REQUIRE(a.points.size() == b.points.size());
        for (std::size_t i = 0; i < a.points.size(); ++i) {
            CHECK(a.points[i] == b.points[i]);
            CHECK(a.proj[i].dx == b.proj[i].dx);
        }
        CHECK_FALSE(a.shortfall);
    }

    SUBCASE("points are unique cells inside the image with nonzero projection") {
        auto set = sample_points(map, 800, 70.0, 5);
        std::set<std::pair<int, int>> cells;
        for (std::size_t i = 0; i < set.points.size(); ++i) {
            int gx, gy;
            REQUIRE(map.cell_of(set.points[i][0], set.points[i][1], gx, gy));
            CHECK(cells.insert({gx, gy}).second);
            CHECK(std::hypot(set.proj[i].dx, set.proj[i].dy) > 0.0);
        }
    }

    SUBCASE("gaussian sampling concentrates near the pfa") {
        auto set = sample_points(map, 2000, 0.2 * std::hypot(320.0, 180.0), 17);
        double mean_sampled = 0.0;
        for (const auto& p : set.points) mean_sampled += std::hypot(p[0] - pfa[0], p[1] - pfa[1]);
        mean_sampled /= static_cast<double>(set.points.size());
        double mean_uniform = 0.0;
        std::size_t support = 0;
        for (int gy = 0; gy < map.grid_height; ++gy)
            for (int gx = 0; gx < map.grid_width; ++gx) {
                auto p = map.node_pos(gx, gy);
                mean_uniform += std::hypot(p[0] - pfa[0], p[1] - pfa[1]);
                ++support;
            }
        mean_uniform /= static_cast<double>(support);
        CHECK(mean_sampled < mean_uniform);
    }

    SUBCASE("small support returns fewer points with the shortfall flag") {
        InfluxMap sparse = make_influx_map(320, 180, 4);
        sparse.frames_trained = 1;
        for (int i = 0; i < 10; ++i) sparse.at(40 + i, 5) = {0.0, 1.0};
        sparse.pfa = {180.0, 20.0};
        auto set = sample_points(sparse, 2000, 60.0, 3);
        CHECK(set.points.size() == 10);
        CHECK(set.shortfall);
    }

    SUBCASE("zero support map is an error") {
        InfluxMap zero = make_influx_map(64, 64, 4);
        zero.frames_trained = 1;
        CHECK_THROWS_AS(sample_points(zero, 10, 10.0, 1), DataError);
    }
}
