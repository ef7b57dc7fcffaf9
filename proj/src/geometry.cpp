#include "itomo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace itomo {

namespace {

void require_on_sphere(const Vec3& p, double radius, const char* what) {
    if (std::abs(p.norm() - radius) > kOnSphereTol * radius)
        throw std::invalid_argument(std::string(what) + " must lie on the sphere |p| = r");
}

}  // namespace

BallGeometry::BallGeometry(double r0_, double r_) : r0(r0_), r(r_) {
    if (!(r0 > 0.0) || !(r0 < r))
        throw std::invalid_argument("BallGeometry requires 0 < r0 < r");
}

double ell_star(const BallGeometry& g) {
    return 2.0 * g.r0 * g.r / std::sqrt(g.r * g.r - g.r0 * g.r0);
}

double min_ell_schrodinger(const BallGeometry& g) { return g.r * std::sqrt(8.0); }

double min_ell_helmholtz(const BallGeometry& g, double n1) {
    if (n1 < 1.0) throw std::invalid_argument("min_ell_helmholtz requires n1 >= 1");
    const double a = 1.0 + 2.0 * n1;
    return g.r * std::sqrt(a * a - 1.0);
}

double shadow_depth(const BallGeometry& g) { return g.r - 2.0 * g.r0 * g.r0 / g.r; }

Vec3 rotate_min_angle(const Vec3& from, const Vec3& to, const Vec3& v) {
    const Vec3 axis_raw = from.cross(to);
    const double s = axis_raw.norm();
    const double c = from.dot(to);
    if (s < 1e-14) {
        if (c > 0.0) return v;  // from == to
        // Antipodal: pi-rotation about the coordinate axis most orthogonal to `from`.
        Vec3 k{1.0, 0.0, 0.0};
        if (std::abs(from.x) > std::abs(from.y) || std::abs(from.x) > std::abs(from.z))
            k = std::abs(from.y) <= std::abs(from.z) ? Vec3{0.0, 1.0, 0.0} : Vec3{0.0, 0.0, 1.0};
        return 2.0 * k * k.dot(v) - v;
    }
    const Vec3 k = axis_raw / s;
    // Rodrigues with cos = c, sin = s.
    return v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c));
}

SourceTriad make_triad(const BallGeometry& g, const Vec3& y, double ell) {
    if (!(ell > 0.0)) throw std::invalid_argument("make_triad requires ell > 0");
    require_on_sphere(y, g.r, "make_triad: y");

    const double h = std::sqrt(3.0) / 2.0;
    const std::array<Vec3, 3> canonical = {
        Vec3{ell * h, ell * 0.5, g.r},    // azimuth pi/6
        Vec3{-ell * h, ell * 0.5, g.r},   // azimuth 5*pi/6
        Vec3{0.0, -ell, g.r},             // azimuth 3*pi/2
    };

    SourceTriad t;
    t.y = y;
    t.ell = ell;
    const Vec3 canon{0.0, 0.0, -1.0};
    const Vec3 dir = y / g.r;
    for (std::size_t j = 0; j < 3; ++j) t.z[j] = rotate_min_angle(canon, dir, canonical[j]);
    return t;
}

bool is_illuminated(const Vec3& x, const Vec3& z) { return x.dot(z - x) > 0.0; }

bool is_shadowed(const Vec3& x, const Vec3& y, const BallGeometry& g) {
    const Vec3 d = x - y;
    return (-y).dot(d) > d.norm() * std::sqrt(g.r * g.r - g.r0 * g.r0);
}

MeridianIntersection second_intersection(const BallGeometry& g, double ell, double phi) {
    if (!(ell > 0.0)) throw std::invalid_argument("second_intersection requires ell > 0");
    if (!(phi > 0.0) || !(phi < std::numbers::pi))
        throw std::invalid_argument("second_intersection requires phi in (0, pi)");

    const double r = g.r;
    const double s = std::sin(phi);
    const double denom = r * r + ell * ell * s * s;

    MeridianIntersection m;
    m.phi = phi;
    m.xi = Vec3{0.0, 2.0 * ell * r * r * s / denom, r - 2.0 * r * ell * ell * s * s / denom};
    // Of the two unit directions with beta_1 = -cos(phi) and z.beta = -ell, the
    // one with beta_2 = sin(phi)*(r^2 - ell^2 sin^2(phi))/denom leaves the
    // antipode; the other lands back on (0,0,r).
    const double b2 = s * (r * r - ell * ell * s * s) / denom;
    const double b3sq = std::max(0.0, s * s - b2 * b2);
    m.beta = Vec3{-std::cos(phi), b2, -std::sqrt(b3sq)};
    return m;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

namespace {

double scramble01(double u, std::uint32_t mask) {
    const double clamped = std::clamp(u, 0.0, std::nextafter(1.0, 0.0));
    const auto bits = static_cast<std::uint32_t>(clamped * 4294967296.0) ^ mask;
    return (static_cast<double>(bits) + 0.5) / 4294967296.0;
}

std::vector<Vec3> fibonacci_points(std::size_t n, double radius, std::uint32_t mask_u,
                                   std::uint32_t mask_v) {
    // Spherical Fibonacci lattice: stratified z, golden-ratio azimuth.
    constexpr double golden_frac = 0.6180339887498949;  // 1/phi
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        double v = std::fmod(static_cast<double>(i) * golden_frac, 1.0);
        if (mask_u != 0 || mask_v != 0) {
            u = scramble01(u, mask_u);
            v = scramble01(v, mask_v);
        }
        const double z = 1.0 - 2.0 * u;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double az = 2.0 * std::numbers::pi * v;
        pts.push_back(Vec3{rho * std::cos(az), rho * std::sin(az), z} * radius);
    }
    return pts;
}

}  // namespace

std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius) {
    return fibonacci_points(n, radius, 0, 0);
}

std::vector<Vec3> fibonacci_sphere_scrambled(std::size_t n, double radius, std::uint64_t seed) {
    const std::uint64_t h = splitmix64(seed);
    return fibonacci_points(n, radius, static_cast<std::uint32_t>(h >> 32),
                            static_cast<std::uint32_t>(h & 0xffffffffull));
}

CoverageReport coverage_check_sources(const BallGeometry& g, const Vec3& y,
                                      std::span<const Vec3> sources, std::size_t n_samples,
                                      std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("coverage check requires n_samples >= 1");
    require_on_sphere(y, g.r, "coverage check: y");

    CoverageReport rep;
    rep.n_samples = n_samples;

    const auto pts = fibonacci_sphere_scrambled(n_samples, g.r, seed);
    double worst = -std::numeric_limits<double>::infinity();
    for (const Vec3& x : pts) {
        if (!is_shadowed(x, y, g)) continue;
        // Uncoveredness margin: smallest deficit r^2 - x.z over the sources;
        // positive means no source sees x.
        double margin = std::numeric_limits<double>::infinity();
        for (const Vec3& z : sources) margin = std::min(margin, g.r * g.r - x.dot(z));
        if (margin > 0.0) {
            ++rep.n_uncovered;
            if (margin > worst) {
                worst = margin;
                rep.worst_point = x;
            }
        }
    }
    return rep;
}

CoverageReport coverage_check(const BallGeometry& g, double ell, std::size_t n_samples,
                              std::uint64_t seed) {
    const Vec3 y{0.0, 0.0, -g.r};
    const SourceTriad t = make_triad(g, y, ell);
    CoverageReport rep = coverage_check_sources(g, y, t.z, n_samples, seed);
    rep.ell = ell;
    return rep;
}

double single_source_lambda_min(const BallGeometry& g) {
    const double denom = g.r * g.r - std::sqrt(2.0) * g.r0 * g.r0;
    if (!(g.r > std::sqrt(2.0) * g.r0))
        throw std::invalid_argument("single auxiliary source requires r > sqrt(2)*r0");
    return g.r * g.r / denom;
}

Vec3 single_source(const BallGeometry& g, const Vec3& y, double lambda) {
    require_on_sphere(y, g.r, "single_source: y");
    const double lmin = single_source_lambda_min(g);
    if (lambda < lmin * (1.0 - 1e-12))
        throw std::invalid_argument("single_source: lambda below admissibility threshold");
    return -lambda * y;
}

}  // namespace itomo
