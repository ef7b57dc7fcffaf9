#include "doctest.h"

#include "itomo/voxel.hpp"

#include <cmath>
#include <stdexcept>
#include <cstdio>
#include <fstream>

using namespace itomo;

TEST_CASE("centered_grid tiles the requested box with cell-centered nodes") {
    const GridSpec g = centered_grid(48, 1.25);
    CHECK(g.spacing == doctest::Approx(2.5 / 48.0).epsilon(1e-15));
    CHECK(g.cell_min().x == doctest::Approx(-1.25).epsilon(1e-14));
    CHECK(g.cell_max().x == doctest::Approx(1.25).epsilon(1e-14));
    CHECK(g.node(0, 0, 0).x == doctest::Approx(-1.25 + 0.5 * g.spacing));
    CHECK(g.index(1, 0, 0) == 1);                         // x-fastest
    CHECK(g.index(0, 1, 0) == 48);
    CHECK(g.index(0, 0, 1) == 48 * 48);

    GridSpec bad = g;
    bad.dims[1] = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("trilinear interpolation") {
    GridSpec g;
    g.dims = {5, 5, 5};
    g.origin = Vec3{-1, -1, -1};
    g.spacing = 0.5;
    VoxelField f(g);
    // linear field is reproduced exactly, including its gradient
    for (std::uint32_t k = 0; k < 5; ++k)
        for (std::uint32_t j = 0; j < 5; ++j)
            for (std::uint32_t i = 0; i < 5; ++i) {
                const Vec3 p = g.node(i, j, k);
                f.at(i, j, k) = 2.0 * p.x - 3.0 * p.y + 0.5 * p.z + 1.0;
            }
    CHECK(f.trilinear(g.node(2, 3, 1)) == doctest::Approx(f.at(2, 3, 1)).epsilon(1e-14));
    CHECK(f.trilinear(Vec3{0.13, -0.42, 0.77}) ==
          doctest::Approx(2.0 * 0.13 + 3.0 * 0.42 + 0.5 * 0.77 + 1.0).epsilon(1e-12));
    const Vec3 grad = f.trilinear_grad(Vec3{0.2, 0.1, -0.3});
    CHECK(grad.x == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(grad.y == doctest::Approx(-3.0).epsilon(1e-12));
    CHECK(grad.z == doctest::Approx(0.5).epsilon(1e-12));

    // midpoint of a grid edge averages the two nodal values
    VoxelField h(g);
    h.at(1, 1, 1) = 3.0;
    h.at(2, 1, 1) = 5.0;
    const Vec3 mid = 0.5 * (g.node(1, 1, 1) + g.node(2, 1, 1));
    CHECK(h.trilinear(mid) == doctest::Approx(4.0).epsilon(1e-14));

    CHECK_THROWS_AS(f.trilinear(Vec3{9, 0, 0}), std::domain_error);
    CHECK_THROWS_AS(f.trilinear_grad(Vec3{0, 0, 2}), std::domain_error);
}

TEST_CASE("rasterize and ball_mask") {
    BumpSum p;
    p.baseline = 1.0;
    p.bumps.push_back({Vec3{0, 0, 0}, 0.5, 0.2});
    const GridSpec g = centered_grid(24, 1.0);
    const VoxelField f = rasterize(p, g);
    CHECK(f.values.size() == 24u * 24u * 24u);
    for (std::uint32_t k = 0; k < 24; ++k)
        for (std::uint32_t j = 0; j < 24; ++j)
            for (std::uint32_t i = 0; i < 24; ++i)
                CHECK(f.at(i, j, k) == doctest::Approx(p.eval(g.node(i, j, k))).epsilon(1e-15));

    const auto mask = ball_mask(g, 0.8);
    std::size_t inside = 0;
    for (auto m : mask) inside += m;
    const double vol_ratio = static_cast<double>(inside) / static_cast<double>(mask.size());
    const double expected = 4.0 / 3.0 * 3.14159265358979 * 0.8 * 0.8 * 0.8 / 8.0;
    CHECK(vol_ratio == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("VXF1 round trip is byte-stable") {
    const GridSpec g = centered_grid(6, 0.75);
    VoxelField f(g);
    for (std::size_t i = 0; i < f.values.size(); ++i)
        f.values[i] = std::sin(static_cast<double>(i) * 0.37) * 1e3;

    const std::string p1 = "vxf_roundtrip_a.vxf", p2 = "vxf_roundtrip_b.vxf";
    write_vxf1(f, p1);
    const VoxelField back = read_vxf1(p1);
    CHECK(back.grid == f.grid);
    CHECK(back.values == f.values);
    write_vxf1(back, p2);

    std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(sa.size() == 4 + 3 * 4 + 4 * 8 + f.values.size() * 8);
    CHECK(sa.substr(0, 4) == "VXF1");
    std::remove(p1.c_str());
    std::remove(p2.c_str());

    CHECK_THROWS_AS(read_vxf1("does_not_exist.vxf"), std::runtime_error);
}
