#include "crossgap/influx.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "crossgap/errors.hpp"

namespace crossgap {

namespace {

inline double magnitude(const FlowVector& v) { return std::hypot(v.dx, v.dy); }

}  // namespace

bool InfluxMap::cell_of(double x, double y, int& gx, int& gy) const {
    gx = static_cast<int>(std::lround((x - offset) / stride));
    gy = static_cast<int>(std::lround((y - offset) / stride));
    return gx >= 0 && gy >= 0 && gx < grid_width && gy < grid_height;
}

namespace {

FlowVector interpolate_field(const InfluxMap& map, const std::vector<FlowVector>& field, double x, double y,
                             const std::vector<double>* w) {
    double u = (x - map.offset) / map.stride;
    double v = (y - map.offset) / map.stride;
    u = std::clamp(u, 0.0, static_cast<double>(map.grid_width - 1));
    v = std::clamp(v, 0.0, static_cast<double>(map.grid_height - 1));
    int x0 = std::min(static_cast<int>(u), map.grid_width - 2 >= 0 ? map.grid_width - 2 : 0);
    int y0 = std::min(static_cast<int>(v), map.grid_height - 2 >= 0 ? map.grid_height - 2 : 0);
    int x1 = std::min(x0 + 1, map.grid_width - 1);
    int y1 = std::min(y0 + 1, map.grid_height - 1);
    double fx = u - x0;
    double fy = v - y0;
    auto fetch = [&](int gx, int gy) {
        std::size_t o = static_cast<std::size_t>(gy) * map.grid_width + gx;
        FlowVector m = field[o];
        if (w != nullptr) {
            m.dx *= (*w)[o];
            m.dy *= (*w)[o];
        }
        return m;
    };
    FlowVector v00 = fetch(x0, y0), v01 = fetch(x1, y0), v10 = fetch(x0, y1), v11 = fetch(x1, y1);
    FlowVector out;
    out.dx = (1 - fy) * ((1 - fx) * v00.dx + fx * v01.dx) + fy * ((1 - fx) * v10.dx + fx * v11.dx);
    out.dy = (1 - fy) * ((1 - fx) * v00.dy + fx * v01.dy) + fy * ((1 - fx) * v10.dy + fx * v11.dy);
    return out;
}

}  // namespace

FlowVector InfluxMap::interpolate(double x, double y) const { return interpolate_field(*this, m, x, y, nullptr); }

FlowVector InfluxMap::interpolate_weighted(double x, double y) const {
    return interpolate_field(*this, m, x, y, &weights);
}

InfluxMap make_influx_map(int image_width, int image_height, int stride, int offset) {
    if (stride < 1) throw DataError("stride must be >= 1");
    if (offset < 0) throw DataError("offset must be >= 0");
    if (image_width <= offset || image_height <= offset) throw DataError("image too small for grid");
    InfluxMap map;
    map.stride = stride;
    map.offset = offset;
    map.image_width = image_width;
    map.image_height = image_height;
    map.grid_width = (image_width - offset) / stride;
    map.grid_height = (image_height - offset) / stride;
    std::size_t n = static_cast<std::size_t>(map.grid_width) * map.grid_height;
    map.m.assign(n, {});
    map.weights.assign(n, 1.0);
    map.counts.assign(n, 0);
    return map;
}

void accumulate(InfluxMap& map, const DenseFlowField& flow) {
    if (flow.stride != map.stride || flow.offset != map.offset || flow.grid_width != map.grid_width ||
        flow.grid_height != map.grid_height)
        throw DataError("flow grid geometry does not match influx map");
    for (std::size_t i = 0; i < map.m.size(); ++i) {
        if (!flow.valid[i]) continue;
        std::int64_t n = ++map.counts[i];
        // Running mean keeps constant fields bit-stable over many updates.
        map.m[i].dx += (flow.vectors[i].dx - map.m[i].dx) / static_cast<double>(n);
        map.m[i].dy += (flow.vectors[i].dy - map.m[i].dy) / static_cast<double>(n);
    }
    ++map.frames_trained;
}

void nullify_outbound(InfluxMap& map) {
    if (map.frames_trained <= 0) throw DataError("influx map has no training data");
    for (auto& v : map.m) {
        if (v.dy < 0.0) v = {0.0, 0.0};
    }
    map.nullified_outbound = true;
}

std::array<double, 2> locate_pfa(const InfluxMap& map, double stop_eps) {
    std::vector<double> mags(map.m.size());
    double max_mag = 0.0;
    for (std::size_t i = 0; i < map.m.size(); ++i) {
        mags[i] = magnitude(map.m[i]);
        max_mag = std::max(max_mag, mags[i]);
    }
    if (max_mag <= 0.0) throw DataError("influx map is all-zero; cannot locate source");

    // Top decile by magnitude, over cells with any motion.
    std::vector<double> nonzero;
    nonzero.reserve(mags.size());
    for (double v : mags)
        if (v > 0.0) nonzero.push_back(v);
    std::size_t q = nonzero.size() - std::max<std::size_t>(1, nonzero.size() / 10);
    std::nth_element(nonzero.begin(), nonzero.begin() + q, nonzero.end());
    double decile = nonzero[q];

    const double stop_mag = stop_eps * max_mag;
    const double step = 0.5 * map.stride;
    const double wlimit = map.image_width - 1.0;
    const double hlimit = map.image_height - 1.0;
    const int max_steps = static_cast<int>(4.0 * std::hypot(wlimit, hlimit) / step) + 8;

    std::vector<std::array<double, 2>> stops;
    for (int gy = 0; gy < map.grid_height; ++gy) {
        for (int gx = 0; gx < map.grid_width; ++gx) {
            if (mags[static_cast<std::size_t>(gy) * map.grid_width + gx] < decile) continue;
            auto p = map.node_pos(gx, gy);
            double x = p[0], y = p[1];
            for (int s = 0; s < max_steps; ++s) {
                FlowVector dir = map.interpolate(x, y);
                double mag = magnitude(dir);
                if (mag < stop_mag) break;
                x -= step * dir.dx / mag;
                y -= step * dir.dy / mag;
                if (x < 0.0 || y < 0.0 || x > wlimit || y > hlimit) {
                    x = std::clamp(x, 0.0, wlimit);
                    y = std::clamp(y, 0.0, hlimit);
                    break;
                }
            }
            stops.push_back({x, y});
        }
    }

    // Single-link clustering with radius 3 * stride (union-find).
    const double link = 3.0 * map.stride;
    const double link2 = link * link;
    std::vector<std::size_t> parent(stops.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (std::size_t i = 0; i < stops.size(); ++i) {
        for (std::size_t j = i + 1; j < stops.size(); ++j) {
            double dx = stops[i][0] - stops[j][0];
            double dy = stops[i][1] - stops[j][1];
            if (dx * dx + dy * dy <= link2) parent[find(i)] = find(j);
        }
    }
    std::vector<std::size_t> size(stops.size(), 0);
    for (std::size_t i = 0; i < stops.size(); ++i) ++size[find(i)];
    std::size_t best = std::max_element(size.begin(), size.end()) - size.begin();
    double cx = 0.0, cy = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < stops.size(); ++i) {
        if (find(i) != best) continue;
        cx += stops[i][0];
        cy += stops[i][1];
        ++n;
    }
    return {cx / static_cast<double>(n), cy / static_cast<double>(n)};
}

void intensify(InfluxMap& map, std::array<double, 2> pfa, double alpha, double rho) {
    if (alpha < 0.0) throw DataError("intensification alpha must be >= 0");
    if (!(rho > 0.0)) throw DataError("intensification rho must be > 0");
    map.pfa = pfa;
    const double inv = 1.0 / (2.0 * rho * rho);
    for (int gy = 0; gy < map.grid_height; ++gy) {
        for (int gx = 0; gx < map.grid_width; ++gx) {
            auto p = map.node_pos(gx, gy);
            double dx = p[0] - pfa[0];
            double dy = p[1] - pfa[1];
            map.weights[static_cast<std::size_t>(gy) * map.grid_width + gx] =
                1.0 + alpha * std::exp(-(dx * dx + dy * dy) * inv);
        }
    }
}

SamplePointSet sample_points(const InfluxMap& map, int count, double sigma_s, std::uint64_t seed) {
    if (count < 1) throw DataError("sample count must be >= 1");
    if (!(sigma_s > 0.0)) throw DataError("sampling sigma must be > 0");
    bool any_support = false;
    for (const auto& v : map.m) {
        if (v.dx != 0.0 || v.dy != 0.0) {
            any_support = true;
            break;
        }
    }
    if (!any_support) throw DataError("influx map has no nonzero support");

    SamplePointSet set;
    set.requested = count;
    set.seed = seed;
    set.sigma = sigma_s;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma_s);
    std::vector<std::uint8_t> taken(map.m.size(), 0);
    const long budget = 50L * count;
    for (long c = 0; c < budget && static_cast<int>(set.points.size()) < count; ++c) {
        double x = map.pfa[0] + gauss(rng);
        double y = map.pfa[1] + gauss(rng);
        if (x < 0.0 || y < 0.0 || x > map.image_width - 1.0 || y > map.image_height - 1.0) continue;
        int gx, gy;
        if (!map.cell_of(x, y, gx, gy)) continue;
        std::size_t o = static_cast<std::size_t>(gy) * map.grid_width + gx;
        if (taken[o]) continue;
        const FlowVector& m = map.m[o];
        if (m.dx == 0.0 && m.dy == 0.0) continue;
        taken[o] = 1;
        set.points.push_back(map.node_pos(gx, gy));
        set.proj.push_back({m.dx * map.weights[o], m.dy * map.weights[o]});
    }
    set.shortfall = static_cast<int>(set.points.size()) < count;
    if (set.points.empty()) throw DataError("no sample points could be drawn from the influx map");
    return set;
}

}  // namespace crossgap
