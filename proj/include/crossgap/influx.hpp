#ifndef CROSSGAP_INFLUX_HPP
#define CROSSGAP_INFLUX_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "crossgap/optflow.hpp"

namespace crossgap {

// Per-location expected inbound motion, learned by temporal averaging of
// dense flow. Vectors stay in per-frame pixel units; intensification weights
// are kept separate so the effective projection vector is w * m.
struct InfluxMap {
    int stride = 4;
    int offset = 0;
    int grid_width = 0;
    int grid_height = 0;
    int image_width = 0;
    int image_height = 0;
    std::vector<FlowVector> m;          // running mean of valid flow samples
    std::vector<double> weights;        // intensification multipliers, >= 1
    std::vector<std::int64_t> counts;   // valid samples per cell
    std::array<double, 2> pfa{0.0, 0.0};
    std::int64_t frames_trained = 0;
    bool nullified_outbound = false;

    std::array<double, 2> node_pos(int gx, int gy) const {
        return {static_cast<double>(offset + gx * stride), static_cast<double>(offset + gy * stride)};
    }
    const FlowVector& at(int gx, int gy) const { return m[static_cast<std::size_t>(gy) * grid_width + gx]; }
    FlowVector& at(int gx, int gy) { return m[static_cast<std::size_t>(gy) * grid_width + gx]; }

    // Nearest grid node for a pixel position; false if outside the grid.
    bool cell_of(double x, double y, int& gx, int& gy) const;

    // Bilinear interpolation of m at a pixel position (grid-edge clamped).
    FlowVector interpolate(double x, double y) const;
    // Same for the effective projection field w * m.
    FlowVector interpolate_weighted(double x, double y) const;
};

InfluxMap make_influx_map(int image_width, int image_height, int stride, int offset = 0);

// Folds one dense flow field into the running per-cell mean. Invalid tracks
// do not contribute to their cell's count.
void accumulate(InfluxMap& map, const DenseFlowField& flow);

// Two-way roads: cells with upward motion (dy < 0) are zeroed.
void nullify_outbound(InfluxMap& map);

// Back-tracks against the map direction from every top-decile-magnitude cell
// until the local magnitude drops below stop_eps * max magnitude or the
// image edge; returns the centroid of the largest single-link cluster of
// stopping points (link radius 3 * stride). Throws DataError on all-zero maps.
std::array<double, 2> locate_pfa(const InfluxMap& map, double stop_eps = 0.05);

// w(p) = 1 + alpha * exp(-|p - pfa|^2 / (2 rho^2)); also records pfa.
void intensify(InfluxMap& map, std::array<double, 2> pfa, double alpha, double rho);

struct SamplePointSet {
    std::vector<std::array<double, 2>> points;  // grid-node positions, unique per cell
    std::vector<FlowVector> proj;               // effective projection vector w*m per point
    bool shortfall = false;                     // fewer points than requested
    int requested = 0;
    std::uint64_t seed = 0;
    double sigma = 0.0;
};

// Draws points from an isotropic Gaussian centered at the pfa (std sigma_s),
// snapped to grid nodes, rejecting nodes outside the image or with |m| = 0,
// deduplicated by cell. Stops at `count` points or after a 50*count
// candidate budget (shortfall flagged). Deterministic given seed.
SamplePointSet sample_points(const InfluxMap& map, int count, double sigma_s, std::uint64_t seed);

}  // namespace crossgap

#endif
