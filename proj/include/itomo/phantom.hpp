#pragma once

#include "itomo/geometry.hpp"
#include "itomo/vec3.hpp"

#include <string>
#include <vector>

namespace itomo {

// One compactly supported C-infinity bump: amplitude * exp(-d^2/(radius^2 - d^2))
// for d = |x - center| < radius, identically zero outside.
struct Bump {
    Vec3 center;
    double radius = 0.0;
    double amplitude = 0.0;
};

// Smooth test medium: baseline plus a finite sum of bumps.  Potentials use
// baseline 0 with non-negative amplitudes; refractive indices use baseline 1.
struct BumpSum {
    std::vector<Bump> bumps;
    double baseline = 0.0;

    double eval(const Vec3& x) const;
};

struct Segment {
    Vec3 a;
    Vec3 b;
};

// Integral of eval along the segment, absolute error <= tol * (1 + |result|).
// Adaptive 7-15 Gauss-Kronrod per bump, restricted to the sub-segment meeting
// that bump's support ball; the baseline contributes exactly baseline * |b - a|.
// Throws on non-convergence (subdivision depth exhausted).
double line_integral_oracle(const BumpSum& p, const Segment& s, double tol = 1e-10);

// Support and sign constraints: every support ball inside the inner ball
// (|center| + radius <= r0) and amplitudes >= 0.
void validate_phantom(const BumpSum& p, const BallGeometry& g);

// JSON file format: {"baseline": b, "bumps": [{"center":[x,y,z], "radius":r,
// "amplitude":a}, ...]}.
BumpSum load_phantom_file(const std::string& path);
void save_phantom_file(const BumpSum& p, const std::string& path);
BumpSum phantom_from_json_text(const std::string& text);
std::string phantom_to_json_text(const BumpSum& p);

}  // namespace itomo
