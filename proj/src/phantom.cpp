#include "itomo/phantom.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace itomo {

namespace {

double bump_value(const Bump& b, double d2) {
    const double r2 = b.radius * b.radius;
    if (d2 >= r2) return 0.0;
    return b.amplitude * std::exp(-d2 / (r2 - d2));
}

// 7-15 Gauss-Kronrod pair on [-1, 1] (positive abscissae; symmetric).
constexpr int kGK = 8;
constexpr double kXgk[kGK] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
constexpr double kWgk[kGK] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
constexpr double kWg[4] = {0.129484966168870, 0.279705391489277, 0.381830050505119,
                           0.417959183673469};

struct GKResult {
    double kronrod;
    double err;
};

template <typename F>
GKResult gk15(F&& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double kron = 0.0, gauss = 0.0;
    for (int i = 0; i < kGK; ++i) {
        const double dx = h * kXgk[i];
        const double fsum = (i == kGK - 1) ? f(c) : f(c - dx) + f(c + dx);
        kron += kWgk[i] * fsum;
        if (i % 2 == 1) gauss += kWg[i / 2] * fsum;
    }
    kron *= h;
    gauss *= h;
    return {kron, std::abs(kron - gauss)};
}

template <typename F>
double adaptive_gk(F&& f, double a, double b, double tol, int depth) {
    if (depth > 48) throw std::runtime_error("line_integral_oracle: quadrature did not converge");
    const auto r = gk15(f, a, b);
    if (r.err <= tol || (b - a) < 1e-15 * std::abs(b)) return r.kronrod;
    const double c = 0.5 * (a + b);
    return adaptive_gk(f, a, c, 0.5 * tol, depth + 1) +
           adaptive_gk(f, c, b, 0.5 * tol, depth + 1);
}

}  // namespace

double BumpSum::eval(const Vec3& x) const {
    double v = baseline;
    for (const Bump& b : bumps) v += bump_value(b, (x - b.center).norm2());
    return v;
}

double line_integral_oracle(const BumpSum& p, const Segment& s, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("line_integral_oracle requires tol > 0");
    const Vec3 d = s.b - s.a;
    const double len = d.norm();
    if (len == 0.0) throw std::invalid_argument("line_integral_oracle: degenerate segment");
    const Vec3 dir = d / len;

    double total = p.baseline * len;
    const double per_bump_tol =
        tol / (2.0 * static_cast<double>(std::max<std::size_t>(1, p.bumps.size())));
    for (const Bump& b : p.bumps) {
        // clip to the parameter range where the segment is inside the support ball
        const Vec3 ca = b.center - s.a;
        const double m = ca.dot(dir);
        const double disc = m * m - (ca.norm2() - b.radius * b.radius);
        if (disc <= 0.0) continue;
        const double sq = std::sqrt(disc);
        const double t0 = std::max(0.0, m - sq);
        const double t1 = std::min(len, m + sq);
        if (t1 <= t0) continue;
        total += adaptive_gk(
            [&](double t) { return bump_value(b, (s.a + t * dir - b.center).norm2()); }, t0, t1,
            per_bump_tol, 0);
    }
    return total;
}

void validate_phantom(const BumpSum& p, const BallGeometry& g) {
    for (const Bump& b : p.bumps) {
        if (!(b.radius > 0.0)) throw std::invalid_argument("phantom: bump radius must be > 0");
        if (b.amplitude < 0.0) throw std::invalid_argument("phantom: bump amplitude must be >= 0");
        if (b.center.norm() + b.radius > g.r0 * (1.0 + 1e-12))
            throw std::invalid_argument("phantom: bump support must lie inside the inner ball");
    }
}

namespace {

BumpSum phantom_from_json(const nlohmann::json& j) {
    BumpSum p;
    p.baseline = j.value("baseline", 0.0);
    if (j.contains("bumps")) {
        for (const auto& jb : j.at("bumps")) {
            Bump b;
            const auto& c = jb.at("center");
            b.center = Vec3{c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
            b.radius = jb.at("radius").get<double>();
            b.amplitude = jb.at("amplitude").get<double>();
            p.bumps.push_back(b);
        }
    }
    return p;
}

nlohmann::json phantom_to_json(const BumpSum& p) {
    nlohmann::json j;
    j["baseline"] = p.baseline;
    j["bumps"] = nlohmann::json::array();
    for (const Bump& b : p.bumps) {
        j["bumps"].push_back({{"center", {b.center.x, b.center.y, b.center.z}},
                              {"radius", b.radius},
                              {"amplitude", b.amplitude}});
    }
    return j;
}

}  // namespace

BumpSum load_phantom_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open phantom file: " + path);
    nlohmann::json j;
    in >> j;
    return phantom_from_json(j);
}

void save_phantom_file(const BumpSum& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write phantom file: " + path);
    out << phantom_to_json(p).dump(2) << "\n";
}

BumpSum phantom_from_json_text(const std::string& text) {
    return phantom_from_json(nlohmann::json::parse(text));
}

std::string phantom_to_json_text(const BumpSum& p) { return phantom_to_json(p).dump(); }

}  // namespace itomo
