#pragma once

#include "itomo/extraction.hpp"
#include "itomo/phantom.hpp"
#include "itomo/vec3.hpp"
#include "itomo/voxel.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace itomo {

// One ray's voxel weights: exact intersection lengths of the (poly)line with
// the node-centered cells of the grid.
struct SparseRow {
    std::vector<std::pair<std::uint32_t, double>> entries;  // (voxel index, length)
    double length = 0.0;                                    // total in-box length
};

struct SparseRaySystem {
    GridSpec grid;
    std::vector<SparseRow> rows;
    std::vector<double> rhs;
    std::size_t clamped = 0;  // kinematic right-hand sides clamped at zero
};

SparseRow siddon_row(const GridSpec& g, const Vec3& a, const Vec3& b);
SparseRow siddon_row(const GridSpec& g, std::span<const Vec3> polyline);

// Straight-ray tomography system: one row per line-integral sample.
SparseRaySystem assemble_tomography(const RaySampleSet& samples, const GridSpec& g);

// Linearized kinematic system: straight rays, rhs = tau - |x-y| clamped at 0.
SparseRaySystem assemble_kinematic_linearized(const RaySampleSet& samples, const GridSpec& g);

struct SirtOptions {
    std::size_t iterations = 200;
    double relaxation = 1.0;  // in (0, 2]; residual monotonicity holds for <= 1
    bool nonneg = true;
};

struct Reconstruction {
    VoxelField field;
    std::size_t iterations = 0;
    std::vector<double> residual_history;  // weighted relative residual per sweep
    std::vector<std::uint8_t> mask;
    std::vector<double> outer_residuals;    // bent-ray refinement only
    std::size_t straight_fallbacks = 0;     // bent-ray traces that fell back
};

// Simultaneous iterative reconstruction with row/column L1 normalization,
// support-mask projection every sweep and optional non-negativity.
Reconstruction sirt_solve(const SparseRaySystem& sys,
                          const std::vector<std::uint8_t>& support_mask,
                          const SirtOptions& opt = {});

// Fraction of masked voxels touched by at least min_rays rows.
double ray_coverage(const SparseRaySystem& sys, const std::vector<std::uint8_t>& mask,
                    std::size_t min_rays = 5);

struct BentRayOptions {
    std::size_t outer_iterations = 2;
    SirtOptions sirt;
    GridSpec forward_grid;           // travel-time grid covering all sources/receivers
    double support_radius = 0.0;     // reconstruction support ball (r0)
    double stop_improvement = 0.01;  // stop when the residual improves less than this
};

// Fixed-point refinement of the kinematic reconstruction: trace geodesics in
// the current model, reassemble rows along them with the baseline length moved
// to the right-hand side, and re-solve.  Failed traces fall back to straight
// rays (counted).
Reconstruction bent_ray_refine(const RaySampleSet& samples, const GridSpec& grid,
                               const BentRayOptions& opt);

struct EvalMetrics {
    double rel_l2 = 0.0;
    double max_err = 0.0;
    double residual = 0.0;
};

// Rasterizes the phantom on the reconstruction grid (minus its baseline) and
// compares inside the support mask.
EvalMetrics evaluate(const Reconstruction& recon, const BumpSum& phantom);

}  // namespace itomo
