#include "itomo/voxel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace itomo {

static_assert(std::endian::native == std::endian::little,
              "grid container I/O assumes a little-endian host");

void GridSpec::validate() const {
    if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2)
        throw std::invalid_argument("GridSpec: dims must be >= 2 per axis");
    if (!(spacing > 0.0)) throw std::invalid_argument("GridSpec: spacing must be > 0");
}

bool GridSpec::inside_nodes(const Vec3& p) const {
    const Vec3 hi = node_max();
    return p.x >= origin.x && p.y >= origin.y && p.z >= origin.z && p.x <= hi.x && p.y <= hi.y &&
           p.z <= hi.z;
}

GridSpec centered_grid(std::uint32_t n, double half_extent) {
    GridSpec g;
    g.dims = {n, n, n};
    g.spacing = 2.0 * half_extent / static_cast<double>(n);
    g.origin = Vec3{-half_extent, -half_extent, -half_extent} +
               Vec3{0.5, 0.5, 0.5} * g.spacing;
    g.validate();
    return g;
}

VoxelField::VoxelField(const GridSpec& g, double fill) : grid(g) {
    grid.validate();
    values.assign(grid.count(), fill);
}

namespace {

struct CellLocator {
    std::uint32_t i, j, k;
    double fx, fy, fz;
};

CellLocator locate(const GridSpec& g, const Vec3& p) {
    if (!g.inside_nodes(p))
        throw std::domain_error("VoxelField: point outside the interpolation box");
    auto axis = [&](double v, double o, std::uint32_t n, double& frac) {
        double u = (v - o) / g.spacing;
        auto i = static_cast<std::int64_t>(std::floor(u));
        i = std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(n) - 2);
        frac = std::clamp(u - static_cast<double>(i), 0.0, 1.0);
        return static_cast<std::uint32_t>(i);
    };
    CellLocator c{};
    c.i = axis(p.x, g.origin.x, g.dims[0], c.fx);
    c.j = axis(p.y, g.origin.y, g.dims[1], c.fy);
    c.k = axis(p.z, g.origin.z, g.dims[2], c.fz);
    return c;
}

}  // namespace

double VoxelField::trilinear(const Vec3& p) const {
    const CellLocator c = locate(grid, p);
    auto v = [&](std::uint32_t di, std::uint32_t dj, std::uint32_t dk) {
        return at(c.i + di, c.j + dj, c.k + dk);
    };
    const double c00 = v(0, 0, 0) * (1 - c.fx) + v(1, 0, 0) * c.fx;
    const double c10 = v(0, 1, 0) * (1 - c.fx) + v(1, 1, 0) * c.fx;
    const double c01 = v(0, 0, 1) * (1 - c.fx) + v(1, 0, 1) * c.fx;
    const double c11 = v(0, 1, 1) * (1 - c.fx) + v(1, 1, 1) * c.fx;
    const double c0 = c00 * (1 - c.fy) + c10 * c.fy;
    const double c1 = c01 * (1 - c.fy) + c11 * c.fy;
    return c0 * (1 - c.fz) + c1 * c.fz;
}

Vec3 VoxelField::trilinear_grad(const Vec3& p) const {
    const CellLocator c = locate(grid, p);
    auto v = [&](std::uint32_t di, std::uint32_t dj, std::uint32_t dk) {
        return at(c.i + di, c.j + dj, c.k + dk);
    };
    const double fx = c.fx, fy = c.fy, fz = c.fz;
    Vec3 grad;
    grad.x = (v(1, 0, 0) - v(0, 0, 0)) * (1 - fy) * (1 - fz) +
             (v(1, 1, 0) - v(0, 1, 0)) * fy * (1 - fz) +
             (v(1, 0, 1) - v(0, 0, 1)) * (1 - fy) * fz + (v(1, 1, 1) - v(0, 1, 1)) * fy * fz;
    grad.y = (v(0, 1, 0) - v(0, 0, 0)) * (1 - fx) * (1 - fz) +
             (v(1, 1, 0) - v(1, 0, 0)) * fx * (1 - fz) +
             (v(0, 1, 1) - v(0, 0, 1)) * (1 - fx) * fz + (v(1, 1, 1) - v(1, 0, 1)) * fx * fz;
    grad.z = (v(0, 0, 1) - v(0, 0, 0)) * (1 - fx) * (1 - fy) +
             (v(1, 0, 1) - v(1, 0, 0)) * fx * (1 - fy) +
             (v(0, 1, 1) - v(0, 1, 0)) * (1 - fx) * fy + (v(1, 1, 1) - v(1, 1, 0)) * fx * fy;
    return grad / grid.spacing;
}

VoxelField rasterize(const BumpSum& p, const GridSpec& g) {
    VoxelField f(g);
    for (std::uint32_t k = 0; k < g.dims[2]; ++k)
        for (std::uint32_t j = 0; j < g.dims[1]; ++j)
            for (std::uint32_t i = 0; i < g.dims[0]; ++i)
                f.values[g.index(i, j, k)] = p.eval(g.node(i, j, k));
    return f;
}

std::vector<std::uint8_t> ball_mask(const GridSpec& g, double radius) {
    std::vector<std::uint8_t> m(g.count(), 0);
    const double r2 = radius * radius;
    for (std::uint32_t k = 0; k < g.dims[2]; ++k)
        for (std::uint32_t j = 0; j < g.dims[1]; ++j)
            for (std::uint32_t i = 0; i < g.dims[0]; ++i)
                m[g.index(i, j, k)] = g.node(i, j, k).norm2() < r2 ? 1 : 0;
    return m;
}

void write_vxf1(const VoxelField& f, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write grid file: " + path);
    out.write("VXF1", 4);
    for (std::uint32_t d : f.grid.dims)
        out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    const double header[4] = {f.grid.origin.x, f.grid.origin.y, f.grid.origin.z, f.grid.spacing};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(f.values.data()),
              static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write on grid file: " + path);
}

VoxelField read_vxf1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open grid file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "VXF1", 4) != 0)
        throw std::runtime_error("not a VXF1 grid file: " + path);
    GridSpec g;
    for (std::uint32_t& d : g.dims) in.read(reinterpret_cast<char*>(&d), sizeof(d));
    double header[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    g.origin = Vec3{header[0], header[1], header[2]};
    g.spacing = header[3];
    g.validate();
    VoxelField f(g);
    in.read(reinterpret_cast<char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated grid file: " + path);
    return f;
}

}  // namespace itomo
