#pragma once

#include "itomo/vec3.hpp"
#include "itomo/voxel.hpp"

#include <vector>

namespace itomo {

// Travel-time field for the metric d_tau = n(x)|dx| from a single source.
struct TauField {
    Vec3 source;
    VoxelField tau;
    double n_max = 1.0;          // max slowness seen at solve time
    double source_ball = 0.0;    // radius of the analytically initialized ball

    double at(const Vec3& x) const { return tau.trilinear(x); }
};

struct EikonalOptions {
    // Second-order one-sided upwind differences where two accepted neighbors
    // line up; falls back to first-order elsewhere.  The plain first-order
    // scheme is available behind the flag but its diagonal error at the
    // resolutions used here is several percent.
    bool second_order = true;
    double source_ball_factor = 3.0;  // analytic init radius in units of spacing
};

// Fast marching for |grad tau| = n with analytic initialization
// tau = n(y)*|x - y| inside the source ball.  Requires n >= 1 on the grid and
// the source inside the node hull; accepted values are checked to be
// non-decreasing in acceptance order.
TauField solve_tau(const VoxelField& n, const Vec3& y, const EikonalOptions& opt = {});

double tau_at(const TauField& t, const Vec3& x);

// Steepest-descent geodesic from x back to the source: dx/ds = -grad tau/|grad tau|
// with the given step (capped at spacing/2), terminating inside the source ball;
// the source point is appended as the final vertex.  Throws if the descent fails
// to reach the source within 10 * tau(x) * n_max / step steps.
std::vector<Vec3> trace_geodesic(const TauField& t, const Vec3& x, double step);

}  // namespace itomo
