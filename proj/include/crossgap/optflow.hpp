#ifndef CROSSGAP_OPTFLOW_HPP
#define CROSSGAP_OPTFLOW_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "crossgap/frame.hpp"

namespace crossgap {

// Displacement in pixels per frame; x rightward, y downward.
struct FlowVector {
    double dx = 0.0;
    double dy = 0.0;
};

struct FlowParams {
    int window_radius = 7;         // integration window is (2r+1)^2
    int levels = 3;                // pyramid depth
    int max_iterations = 20;       // per level
    double epsilon = 0.01;         // stop when the update step is below this (pixels)
    double eigen_threshold = 1e-4; // min eigenvalue of G / window area, on [0,1] intensities
    double max_displacement = 0.0; // 0 = auto: radius * 2^levels
};

struct ImagePyramid {
    std::vector<Frame> levels;  // level 0 is the original image
};

// Level 0 is the original; each level halves resolution via 2x2 box
// smoothing then subsampling. Throws DataError if the image is too small.
ImagePyramid build_pyramid(const Frame& frame, int levels);

struct SparseFlow {
    std::vector<std::array<double, 2>> points;  // pixel coordinates
    std::vector<FlowVector> vectors;            // per-frame units (displacement / span)
    std::vector<std::uint8_t> valid;            // invalid tracks are flagged, never silently zeroed
    std::int64_t frame_from = 0;
    std::int64_t frame_to = 0;

    std::int64_t span() const { return frame_to - frame_from; }
};

// Iterative coarse-to-fine least-squares tracking of each point from prev to
// next. Tracks are invalid when the structure tensor is near-singular, the
// window exits the image, or the displacement exceeds the configured bound.
SparseFlow sparse_flow(const Frame& prev, const Frame& next,
                       const std::vector<std::array<double, 2>>& points,
                       const FlowParams& params = {});

struct DenseFlowField {
    int stride = 1;
    int offset = 0;  // pixel position of grid node (0,0)
    int grid_width = 0;
    int grid_height = 0;
    std::vector<FlowVector> vectors;  // row-major; invalid cells hold (0,0)
    std::vector<std::uint8_t> valid;
    std::int64_t frame_from = 0;
    std::int64_t frame_to = 0;

    std::array<double, 2> node_pos(int gx, int gy) const {
        return {static_cast<double>(offset + gx * stride), static_cast<double>(offset + gy * stride)};
    }
    const FlowVector& at(int gx, int gy) const { return vectors[static_cast<std::size_t>(gy) * grid_width + gx]; }
    FlowVector& at(int gx, int gy) { return vectors[static_cast<std::size_t>(gy) * grid_width + gx]; }
    bool valid_at(int gx, int gy) const { return valid[static_cast<std::size_t>(gy) * grid_width + gx] != 0; }
    std::int64_t span() const { return frame_to - frame_from; }
};

// sparse_flow evaluated at all grid nodes (offset + i*stride).
DenseFlowField dense_flow(const Frame& prev, const Frame& next, int stride,
                          const FlowParams& params = {}, int offset = 0);

// Debug dumps: x,y,dx,dy,valid. Not a stable interchange format.
void write_flow_csv(const std::filesystem::path& file, const SparseFlow& flow);
void write_flow_csv(const std::filesystem::path& file, const DenseFlowField& flow);

}  // namespace crossgap

#endif
