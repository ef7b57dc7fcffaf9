#pragma once

#include "itomo/phantom.hpp"
#include "itomo/vec3.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace itomo {

// Regular isotropic grid of nodes; node (i,j,k) sits at origin + spacing*(i,j,k).
// Each node also owns the voxel cell of side `spacing` centered on it, so the
// cell-covered box extends half a spacing beyond the node hull on every side.
struct GridSpec {
    std::array<std::uint32_t, 3> dims{0, 0, 0};
    Vec3 origin;
    double spacing = 0.0;

    std::size_t count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k);
    }
    Vec3 node(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return origin + spacing * Vec3{static_cast<double>(i), static_cast<double>(j),
                                       static_cast<double>(k)};
    }
    Vec3 node_max() const {
        return node(dims[0] - 1, dims[1] - 1, dims[2] - 1);
    }
    Vec3 cell_min() const { return origin - Vec3{0.5, 0.5, 0.5} * spacing; }
    Vec3 cell_max() const { return node_max() + Vec3{0.5, 0.5, 0.5} * spacing; }
    bool inside_nodes(const Vec3& p) const;

    void validate() const;  // dims >= 2 per axis, spacing > 0
    bool operator==(const GridSpec&) const = default;
};

// n^3 grid of cell-centered nodes tiling [-half_extent, half_extent]^3.
GridSpec centered_grid(std::uint32_t n, double half_extent);

struct VoxelField {
    GridSpec grid;
    std::vector<double> values;  // x-fastest

    VoxelField() = default;
    VoxelField(const GridSpec& g, double fill = 0.0);

    double& at(std::uint32_t i, std::uint32_t j, std::uint32_t k) {
        return values[grid.index(i, j, k)];
    }
    double at(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return values[grid.index(i, j, k)];
    }

    // Trilinear interpolation over the node hull; throws outside it.
    double trilinear(const Vec3& p) const;
    Vec3 trilinear_grad(const Vec3& p) const;
};

VoxelField rasterize(const BumpSum& p, const GridSpec& g);

// Mask of nodes with |node| < radius.
std::vector<std::uint8_t> ball_mask(const GridSpec& g, double radius);

// Binary grid container: magic "VXF1", nx/ny/nz as u32, origin and spacing as
// f64, then nx*ny*nz f64 node values x-fastest; little-endian throughout.
void write_vxf1(const VoxelField& f, const std::string& path);
VoxelField read_vxf1(const std::string& path);

}  // namespace itomo
