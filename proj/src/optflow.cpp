#include "crossgap/optflow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "crossgap/errors.hpp"
#include "crossgap/parallel.hpp"

namespace crossgap {

namespace {

// Bilinear sample; valid for x in [0, w-1], y in [0, h-1].
inline double sample(const Frame& img, double x, double y) {
    int x0 = std::min(static_cast<int>(x), img.width - 2);
    int y0 = std::min(static_cast<int>(y), img.height - 2);
    double fx = x - x0;
    double fy = y - y0;
    const float* p = &img.luma[static_cast<std::size_t>(y0) * img.width + x0];
    double top = (1.0 - fx) * p[0] + fx * p[1];
    double bot = (1.0 - fx) * p[img.width] + fx * p[img.width + 1];
    return (1.0 - fy) * top + fy * bot;
}

inline bool window_fits(const Frame& img, double cx, double cy, int r) {
    return cx - r >= 0.0 && cy - r >= 0.0 && cx + r <= img.width - 1.0 && cy + r <= img.height - 1.0;
}

struct LevelPatch {
    // Sampled prev-image values and their central-difference gradients over
    // the (2r+1)^2 window, plus the structure tensor.
    std::vector<double> value;
    std::vector<double> gx;
    std::vector<double> gy;
    double g11 = 0.0, g12 = 0.0, g22 = 0.0;
};

// Fills the patch around (cx, cy); requires a margin of r+1 for gradients.
void fill_patch(const Frame& img, double cx, double cy, int r, LevelPatch& patch) {
    const int w = 2 * r + 1;
    const int wp = w + 2;
    static thread_local std::vector<double> raw;
    raw.resize(static_cast<std::size_t>(wp) * wp);
    for (int j = 0; j < wp; ++j)
        for (int i = 0; i < wp; ++i)
            raw[static_cast<std::size_t>(j) * wp + i] = sample(img, cx + i - r - 1, cy + j - r - 1);

    patch.value.resize(static_cast<std::size_t>(w) * w);
    patch.gx.resize(patch.value.size());
    patch.gy.resize(patch.value.size());
    patch.g11 = patch.g12 = patch.g22 = 0.0;
    for (int j = 0; j < w; ++j) {
        for (int i = 0; i < w; ++i) {
            std::size_t c = static_cast<std::size_t>(j + 1) * wp + (i + 1);
            std::size_t o = static_cast<std::size_t>(j) * w + i;
            patch.value[o] = raw[c];
            double ix = 0.5 * (raw[c + 1] - raw[c - 1]);
            double iy = 0.5 * (raw[c + wp] - raw[c - wp]);
            patch.gx[o] = ix;
            patch.gy[o] = iy;
            patch.g11 += ix * ix;
            patch.g12 += ix * iy;
            patch.g22 += iy * iy;
        }
    }
}

inline double min_eigenvalue(double a, double b, double c) {
    double tr = a + c;
    double d = std::sqrt((a - c) * (a - c) + 4.0 * b * b);
    return 0.5 * (tr - d);
}

struct TrackOutcome {
    FlowVector displacement;
    bool valid = false;
};

TrackOutcome track_point(const ImagePyramid& prev, const ImagePyramid& next, double x, double y,
                         const FlowParams& prm) {
    const int r = prm.window_radius;
    const double max_disp = prm.max_displacement > 0.0
                                ? prm.max_displacement
                                : static_cast<double>(r) * (1 << prm.levels);
    const double area = static_cast<double>(2 * r + 1) * (2 * r + 1);

    double gx = 0.0, gy = 0.0;  // accumulated guess, in units of the current level
    LevelPatch patch;
    static thread_local std::vector<double> warped;

    for (int lvl = static_cast<int>(prev.levels.size()) - 1; lvl >= 0; --lvl) {
        const Frame& I = prev.levels[lvl];
        const Frame& J = next.levels[lvl];
        const double scale = 1.0 / (1 << lvl);
        const double px = x * scale;
        const double py = y * scale;

        // Gradients need one extra pixel of margin. Coarse levels that do
        // not fit are skipped; level 0 must fit or the track is invalid.
        if (!window_fits(I, px, py, r + 1)) {
            if (lvl == 0) return {};
            gx *= 2.0;
            gy *= 2.0;
            continue;
        }

        fill_patch(I, px, py, r, patch);

        if (lvl == 0 && min_eigenvalue(patch.g11, patch.g12, patch.g22) / area < prm.eigen_threshold)
            return {};

        double det = patch.g11 * patch.g22 - patch.g12 * patch.g12;
        if (det > 1e-12) {
            const double inv11 = patch.g22 / det;
            const double inv12 = -patch.g12 / det;
            const double inv22 = patch.g11 / det;
            const int w = 2 * r + 1;
            warped.resize(static_cast<std::size_t>(w) * w);
            for (int it = 0; it < prm.max_iterations; ++it) {
                double qx = px + gx;
                double qy = py + gy;
                if (!window_fits(J, qx, qy, r)) {
                    if (lvl == 0) return {};  // displacement exits image bounds
                    break;
                }
                double bx = 0.0, by = 0.0;
                for (int j = 0; j < w; ++j) {
                    for (int i = 0; i < w; ++i) {
                        std::size_t o = static_cast<std::size_t>(j) * w + i;
                        double residual = patch.value[o] - sample(J, qx + i - r, qy + j - r);
                        bx += residual * patch.gx[o];
                        by += residual * patch.gy[o];
                    }
                }
                double ux = inv11 * bx + inv12 * by;
                double uy = inv12 * bx + inv22 * by;
                gx += ux;
                gy += uy;
                if (ux * ux + uy * uy < prm.epsilon * prm.epsilon) break;
            }
        }

        if (lvl > 0) {
            gx *= 2.0;
            gy *= 2.0;
        }
    }

    if (!window_fits(next.levels[0], x + gx, y + gy, r)) return {};
    if (!std::isfinite(gx) || !std::isfinite(gy)) return {};
    if (gx * gx + gy * gy > max_disp * max_disp) return {};
    return {{gx, gy}, true};
}

void check_pair(const Frame& prev, const Frame& next) {
    if (prev.width != next.width || prev.height != next.height)
        throw DataError("flow frames have mismatched dimensions");
    if (next.index <= prev.index) throw DataError("flow frames out of order");
}

void check_window(const Frame& frame, const FlowParams& prm) {
    if (prm.levels < 1) throw DataError("pyramid levels must be >= 1");
    if (prm.window_radius < 1) throw DataError("window radius must be >= 1");
    int need = (1 << (prm.levels - 1)) * (2 * prm.window_radius + 1);
    if (frame.width < need || frame.height < need)
        throw DataError("image too small for requested pyramid depth and window");
}

}  // namespace

ImagePyramid build_pyramid(const Frame& frame, int levels) {
    if (levels < 1) throw DataError("pyramid levels must be >= 1");
    if (frame.width < (1 << (levels - 1)) || frame.height < (1 << (levels - 1)))
        throw DataError("image too small for requested pyramid levels");
    ImagePyramid pyr;
    pyr.levels.reserve(static_cast<std::size_t>(levels));
    pyr.levels.push_back(frame);
    for (int l = 1; l < levels; ++l) {
        const Frame& src = pyr.levels.back();
        Frame dst;
        dst.width = src.width / 2;
        dst.height = src.height / 2;
        dst.index = frame.index;
        dst.timestamp = frame.timestamp;
        dst.luma.resize(static_cast<std::size_t>(dst.width) * dst.height);
        for (int y = 0; y < dst.height; ++y) {
            const float* r0 = &src.luma[static_cast<std::size_t>(2 * y) * src.width];
            const float* r1 = r0 + src.width;
            float* out = &dst.luma[static_cast<std::size_t>(y) * dst.width];
            for (int x = 0; x < dst.width; ++x)
                out[x] = 0.25f * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
        }
        pyr.levels.push_back(std::move(dst));
    }
    return pyr;
}

SparseFlow sparse_flow(const Frame& prev, const Frame& next,
                       const std::vector<std::array<double, 2>>& points, const FlowParams& params) {
    check_pair(prev, next);
    check_window(prev, params);
    if (points.empty()) throw DataError("empty point list");

    ImagePyramid p0 = build_pyramid(prev, params.levels);
    ImagePyramid p1 = build_pyramid(next, params.levels);

    SparseFlow flow;
    flow.points = points;
    flow.vectors.resize(points.size());
    flow.valid.assign(points.size(), 0);
    flow.frame_from = prev.index;
    flow.frame_to = next.index;
    const double inv_span = 1.0 / static_cast<double>(flow.span());

    parallel_for(points.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            TrackOutcome out = track_point(p0, p1, points[i][0], points[i][1], params);
            if (out.valid) {
                flow.vectors[i] = {out.displacement.dx * inv_span, out.displacement.dy * inv_span};
                flow.valid[i] = 1;
            }
        }
    });
    return flow;
}

DenseFlowField dense_flow(const Frame& prev, const Frame& next, int stride, const FlowParams& params,
                          int offset) {
    check_pair(prev, next);
    check_window(prev, params);
    if (stride < 1) throw DataError("stride must be >= 1");
    if (offset < 0 || offset >= prev.width || offset >= prev.height) throw DataError("bad grid offset");

    DenseFlowField field;
    field.stride = stride;
    field.offset = offset;
    field.grid_width = (prev.width - offset) / stride;
    field.grid_height = (prev.height - offset) / stride;
    field.frame_from = prev.index;
    field.frame_to = next.index;
    field.vectors.assign(static_cast<std::size_t>(field.grid_width) * field.grid_height, {});
    field.valid.assign(field.vectors.size(), 0);

    ImagePyramid p0 = build_pyramid(prev, params.levels);
    ImagePyramid p1 = build_pyramid(next, params.levels);
    const double inv_span = 1.0 / static_cast<double>(field.span());

    parallel_for(static_cast<std::size_t>(field.grid_height), [&](std::size_t rbegin, std::size_t rend) {
        for (std::size_t gy = rbegin; gy < rend; ++gy) {
            for (int gx = 0; gx < field.grid_width; ++gx) {
                auto pos = field.node_pos(gx, static_cast<int>(gy));
                TrackOutcome out = track_point(p0, p1, pos[0], pos[1], params);
                std::size_t o = gy * field.grid_width + gx;
                if (out.valid) {
                    field.vectors[o] = {out.displacement.dx * inv_span, out.displacement.dy * inv_span};
                    field.valid[o] = 1;
                }
            }
        }
    });
    return field;
}

namespace {

void write_rows(std::ofstream& out, const std::vector<std::array<double, 2>>& pts,
                const std::vector<FlowVector>& vecs, const std::vector<std::uint8_t>& valid) {
    out << "x,y,dx,dy,valid\n";
    char row[160];
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::snprintf(row, sizeof(row), "%.9g,%.9g,%.9g,%.9g,%d\n", pts[i][0], pts[i][1], vecs[i].dx,
                      vecs[i].dy, valid[i] ? 1 : 0);
        out << row;
    }
}

}  // namespace

void write_flow_csv(const std::filesystem::path& file, const SparseFlow& flow) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    write_rows(out, flow.points, flow.vectors, flow.valid);
}

void write_flow_csv(const std::filesystem::path& file, const DenseFlowField& flow) {
    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write " + file.string());
    std::vector<std::array<double, 2>> pts;
    pts.reserve(flow.vectors.size());
    for (int gy = 0; gy < flow.grid_height; ++gy)
        for (int gx = 0; gx < flow.grid_width; ++gx) pts.push_back(flow.node_pos(gx, gy));
    write_rows(out, pts, flow.vectors, flow.valid);
}

}  // namespace crossgap
