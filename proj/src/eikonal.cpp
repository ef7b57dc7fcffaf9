#include "itomo/eikonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

namespace itomo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class State : std::uint8_t { far, trial, accepted };

struct HeapEntry {
    double t;
    std::size_t idx;
    bool operator>(const HeapEntry& o) const {
        return t > o.t || (t == o.t && idx > o.idx);
    }
};

struct Solver {
    const VoxelField& n;
    const GridSpec& g;
    bool second_order;
    std::vector<double> t;
    std::vector<State> state;
    std::vector<std::uint8_t> exact;  // analytically seeded nodes, never recomputed
    // lazy-deletion min-heap; stale entries are skipped on pop
    std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap;

    explicit Solver(const VoxelField& n_, bool so)
        : n(n_),
          g(n_.grid),
          second_order(so),
          t(g.count(), kInf),
          state(g.count(), State::far),
          exact(g.count(), 0) {}

    std::array<std::uint32_t, 3> coords(std::size_t idx) const {
        const auto nx = g.dims[0], ny = g.dims[1];
        return {static_cast<std::uint32_t>(idx % nx),
                static_cast<std::uint32_t>((idx / nx) % ny),
                static_cast<std::uint32_t>(idx / (static_cast<std::size_t>(nx) * ny))};
    }

    bool node_at(const std::array<std::int64_t, 3>& pos, std::size_t& idx) const {
        for (int a = 0; a < 3; ++a)
            if (pos[a] < 0 || pos[a] >= static_cast<std::int64_t>(g.dims[a])) return false;
        idx = g.index(static_cast<std::uint32_t>(pos[0]), static_cast<std::uint32_t>(pos[1]),
                      static_cast<std::uint32_t>(pos[2]));
        return true;
    }

    // Upwind data for one axis, written as the derivative term (alpha*t - beta).
    struct AxisTerm {
        double alpha = 0.0;
        double beta = 0.0;
        double t1 = kInf;  // nearest accepted neighbor value
        bool valid = false;
    };

    AxisTerm axis_term(const std::array<std::uint32_t, 3>& c, int axis) const {
        const std::array<std::int64_t, 3> pos = {c[0], c[1], c[2]};
        AxisTerm best;
        for (int dir = -1; dir <= 1; dir += 2) {
            auto p1 = pos;
            p1[axis] += dir;
            std::size_t i1;
            if (!node_at(p1, i1)) continue;
            if (state[i1] != State::accepted) continue;
            const double t1 = t[i1];
            if (best.valid && t1 >= best.t1) continue;
            best.valid = true;
            best.t1 = t1;
            best.alpha = 1.0 / g.spacing;
            best.beta = t1 / g.spacing;
            if (second_order) {
                auto p2 = pos;
                p2[axis] += 2 * dir;
                std::size_t i2;
                if (node_at(p2, i2) && state[i2] == State::accepted && t[i2] <= t1) {
                    best.alpha = 1.5 / g.spacing;
                    best.beta = (4.0 * t1 - t[i2]) / (2.0 * g.spacing);
                }
            }
        }
        return best;
    }

    // Solve sum_axes (alpha_i*t - beta_i)^2 = n^2, dropping axes that violate
    // causality (the solution must exceed every participating neighbor value).
    double update_value(std::size_t idx) const {
        const auto c = coords(idx);
        std::array<AxisTerm, 3> terms;
        int m = 0;
        for (int axis = 0; axis < 3; ++axis) {
            auto at = axis_term(c, axis);
            if (at.valid) terms[m++] = at;
        }
        if (m == 0) return kInf;
        std::sort(terms.begin(), terms.begin() + m,
                  [](const AxisTerm& a, const AxisTerm& b) { return a.t1 < b.t1; });
        const double rhs = n.values[idx];
        for (int use = m; use >= 1; --use) {
            double A = 0.0, B = 0.0, C = -rhs * rhs;
            for (int i = 0; i < use; ++i) {
                A += terms[i].alpha * terms[i].alpha;
                B += terms[i].alpha * terms[i].beta;
                C += terms[i].beta * terms[i].beta;
            }
            const double disc = B * B - A * C;
            if (disc < 0.0) continue;  // drop the slowest axis and retry
            const double cand = (B + std::sqrt(disc)) / A;
            if (cand >= terms[use - 1].t1) return cand;
        }
        // fallback: one-dimensional first-order step from the fastest axis
        return terms[0].t1 + rhs * g.spacing;
    }

    void push(std::size_t idx, double val) {
        t[idx] = val;
        state[idx] = State::trial;
        heap.push({val, idx});
    }

    void march() {
        double last_accepted = -kInf;
        while (!heap.empty()) {
            const auto top = heap.top();
            heap.pop();
            if (state[top.idx] == State::accepted || top.t != t[top.idx]) continue;
            // second-order updates are non-causal at the truncation scale; a
            // genuine ordering bug violates by a full step or more
            if (top.t < last_accepted - 0.1 * g.spacing * n.values[top.idx])
                throw std::logic_error("fast marching: accepted values decreased");
            last_accepted = std::max(last_accepted, top.t);
            state[top.idx] = State::accepted;

            const auto c = coords(top.idx);
            const std::array<std::int64_t, 3> pos = {c[0], c[1], c[2]};
            for (int axis = 0; axis < 3; ++axis) {
                for (int dir = -1; dir <= 1; dir += 2) {
                    auto p = pos;
                    p[axis] += dir;
                    std::size_t nb;
                    if (!node_at(p, nb)) continue;
                    if (state[nb] == State::accepted || exact[nb]) continue;
                    const double cand = update_value(nb);
                    if (cand < t[nb]) push(nb, cand);
                }
            }
        }
    }
};

}  // namespace

TauField solve_tau(const VoxelField& n, const Vec3& y, const EikonalOptions& opt) {
    n.grid.validate();
    if (!n.grid.inside_nodes(y))
        throw std::invalid_argument("solve_tau: source outside the grid node hull");
    double n_max = 1.0;
    for (double v : n.values) {
        if (v < 1.0 - 1e-12) throw std::invalid_argument("solve_tau: slowness below 1");
        n_max = std::max(n_max, v);
    }

    Solver s(n, opt.second_order);
    const double ball = opt.source_ball_factor * n.grid.spacing;
    const double n_src = n.trilinear(y);

    // seed every node inside the source ball with the analytic distance value
    const GridSpec& g = n.grid;
    auto clamp_idx = [&](double v, double o, std::uint32_t dim) {
        auto i = static_cast<std::int64_t>(std::floor((v - o) / g.spacing));
        return std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(dim) - 1);
    };
    const auto ilo = clamp_idx(y.x - ball, g.origin.x, g.dims[0]);
    const auto ihi = clamp_idx(y.x + ball + g.spacing, g.origin.x, g.dims[0]);
    const auto jlo = clamp_idx(y.y - ball, g.origin.y, g.dims[1]);
    const auto jhi = clamp_idx(y.y + ball + g.spacing, g.origin.y, g.dims[1]);
    const auto klo = clamp_idx(y.z - ball, g.origin.z, g.dims[2]);
    const auto khi = clamp_idx(y.z + ball + g.spacing, g.origin.z, g.dims[2]);
    std::size_t seeded = 0;
    for (auto k = klo; k <= khi; ++k)
        for (auto j = jlo; j <= jhi; ++j)
            for (auto i = ilo; i <= ihi; ++i) {
                const Vec3 p = g.node(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                      static_cast<std::uint32_t>(k));
                const double d = dist(p, y);
                if (d > ball) continue;
                const std::size_t idx = g.index(static_cast<std::uint32_t>(i),
                                                static_cast<std::uint32_t>(j),
                                                static_cast<std::uint32_t>(k));
                s.push(idx, n_src * d);
                s.exact[idx] = 1;
                ++seeded;
            }
    if (seeded == 0) throw std::invalid_argument("solve_tau: source ball contains no grid node");

    s.march();

    TauField out;
    out.source = y;
    out.n_max = n_max;
    out.source_ball = ball;
    out.tau.grid = g;
    out.tau.values = std::move(s.t);
    return out;
}

double tau_at(const TauField& t, const Vec3& x) { return t.tau.trilinear(x); }

std::vector<Vec3> trace_geodesic(const TauField& t, const Vec3& x, double step) {
    const GridSpec& g = t.tau.grid;
    if (!(step > 0.0)) throw std::invalid_argument("trace_geodesic: step must be > 0");
    step = std::min(step, 0.5 * g.spacing);
    const double tau_x = t.at(x);
    if (!(tau_x > 0.0)) throw std::invalid_argument("trace_geodesic: tau(x) must be > 0");

    const double stop_radius = std::max(t.source_ball, 1e-12);
    const auto max_steps =
        static_cast<std::size_t>(std::ceil(10.0 * tau_x * t.n_max / step)) + 16;

    std::vector<Vec3> path;
    path.push_back(x);
    Vec3 pos = x;
    for (std::size_t it = 0; it < max_steps; ++it) {
        if (dist(pos, t.source) <= stop_radius) {
            path.push_back(t.source);
            return path;
        }
        const Vec3 grad = t.tau.trilinear_grad(pos);
        const double gn = grad.norm();
        if (gn < 1e-12)
            throw std::runtime_error("trace_geodesic: vanishing gradient away from the source");
        Vec3 next = pos - grad * (step / gn);
        // keep the descent inside the interpolation box
        const Vec3 lo = g.origin, hi = g.node_max();
        next.x = std::clamp(next.x, lo.x, hi.x);
        next.y = std::clamp(next.y, lo.y, hi.y);
        next.z = std::clamp(next.z, lo.z, hi.z);
        pos = next;
        path.push_back(pos);
    }
    throw std::runtime_error(
        "trace_geodesic: failed to reach the source ball (non-simple or corrupted field)");
}

}  // namespace itomo
