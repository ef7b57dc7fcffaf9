#pragma once

#include "itomo/vec3.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace itomo {

// Relative tolerance for "point lies on the sphere" preconditions.
inline constexpr double kOnSphereTol = 1e-9;

// Observation system: an opaque ball of radius r0 centered at the origin,
// enclosed by the measurement sphere S of radius r.  Point sources sit on S,
// auxiliary sources on tangent planes of S.
struct BallGeometry {
    double r0;
    double r;
    BallGeometry(double r0_, double r_);
};

// Three auxiliary sources for a primary source y on S.  All three lie on the
// tangent plane of S at the antipode -y, at distance ell from -y, and form an
// equilateral triangle with circumradius ell (pairwise separation ell*sqrt(3)).
struct SourceTriad {
    Vec3 y;
    double ell = 0.0;
    std::array<Vec3, 3> z{};
};

// Second intersection of the circle {xi on S : |xi - z| = ell}, for the
// auxiliary source z = (ell*cos(phi), ell*sin(phi), r), with the meridian
// plane xi_1 = 0.  The first intersection is always the antipode (0,0,r).
struct MeridianIntersection {
    double phi = 0.0;
    Vec3 xi;    // |xi| = r identically
    Vec3 beta;  // unit direction: xi = z + ell*beta
};

struct CoverageReport {
    std::size_t n_samples = 0;
    std::size_t n_uncovered = 0;
    std::optional<Vec3> worst_point;
    double ell = 0.0;
};

// Critical auxiliary distance 2*r0*r/sqrt(r^2 - r0^2) above which the triad's
// illuminated sets jointly cover the shadow set of any source.
double ell_star(const BallGeometry& g);

// Minimum admissible ell for the potential-scattering data reduction: r*sqrt(8).
double min_ell_schrodinger(const BallGeometry& g);

// Minimum admissible ell for the refractive-index data reduction with
// 1 <= n(x) <= n1: r*sqrt((1 + 2*n1)^2 - 1).  Rejects n1 < 1.
double min_ell_helmholtz(const BallGeometry& g, double n1);

// Lowest third coordinate over the shadow set of y = (0,0,-r): r - 2*r0^2/r.
double shadow_depth(const BallGeometry& g);

// Canonical triad for y = (0,0,-r) has vertices at azimuths pi/6, 5*pi/6,
// 3*pi/2 on the tangent plane x3 = r; a general y uses the minimal-angle
// rotation carrying (0,0,-r) to y (identity / pi about the x-axis at the poles).
SourceTriad make_triad(const BallGeometry& g, const Vec3& y, double ell);

// x on S is visible from the exterior point z: x.(z - x) > 0 (strict; the
// grazing boundary counts as not illuminated).
bool is_illuminated(const Vec3& x, const Vec3& z);

// x on S lies in the shadow cast by the opaque ball for a source at y on S:
// -y.(x - y) > |x - y| * sqrt(r^2 - r0^2).  Equivalent to the open segment
// from y to x meeting the open ball |p| < r0.
bool is_shadowed(const Vec3& x, const Vec3& y, const BallGeometry& g);

MeridianIntersection second_intersection(const BallGeometry& g, double ell, double phi);

// Samples n quasi-uniform points on S (seed-scrambled lattice), keeps the ones
// shadowed for y, and counts how many are illuminated by none of the sources.
// worst_point is the uncovered sample farthest from every illuminated set,
// ties broken by smallest sample index.
CoverageReport coverage_check_sources(const BallGeometry& g, const Vec3& y,
                                      std::span<const Vec3> sources,
                                      std::size_t n_samples, std::uint64_t seed);

// Coverage check for the canonical triad at y = (0,0,-r).
CoverageReport coverage_check(const BallGeometry& g, double ell,
                              std::size_t n_samples, std::uint64_t seed);

// Single replacement source z = -lambda*y (valid only when r > sqrt(2)*r0).
// The admissibility threshold r^2/(r^2 - sqrt(2)*r0^2) is what single_source
// enforces; full shadow coverage needs the strictly larger r^2/(r^2 - 2*r0^2)
// (see coverage_check_sources), which callers should verify by sampling.
double single_source_lambda_min(const BallGeometry& g);
Vec3 single_source(const BallGeometry& g, const Vec3& y, double lambda);

// Deterministic quasi-uniform sphere lattices.  The scrambled variant XORs the
// two lattice coordinates with seed-derived masks before mapping to the sphere.
std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius);
std::vector<Vec3> fibonacci_sphere_scrambled(std::size_t n, double radius,
                                             std::uint64_t seed);

// Minimal-angle rotation carrying the unit vector `from` to `to`, applied to v.
// For antipodal from/to the rotation axis is the coordinate axis most
// orthogonal to `from`.
Vec3 rotate_min_angle(const Vec3& from, const Vec3& to, const Vec3& v);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace itomo
