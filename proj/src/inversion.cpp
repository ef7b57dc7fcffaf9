#include "itomo/inversion.hpp"

#include "itomo/eikonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace itomo {

namespace {

// Exact parametric traversal of the node-centered cell decomposition.  Cell
// (i,j,k) spans [origin + (i-1/2)h, origin + (i+1/2)h) per axis.
void accumulate_ray(const GridSpec& g, const Vec3& a, const Vec3& b,
                    std::vector<std::pair<std::uint32_t, double>>& out, double& length) {
    const Vec3 d = b - a;
    const double seg_len = d.norm();
    if (seg_len == 0.0) return;

    const Vec3 lo = g.cell_min();
    const Vec3 hi = g.cell_max();

    // clip [0,1] parameter range to the cell box (slab method)
    double t0 = 0.0, t1 = 1.0;
    const double av[3] = {a.x, a.y, a.z};
    const double dv[3] = {d.x, d.y, d.z};
    const double lov[3] = {lo.x, lo.y, lo.z};
    const double hiv[3] = {hi.x, hi.y, hi.z};
    for (int ax = 0; ax < 3; ++ax) {
        if (dv[ax] == 0.0) {
            if (av[ax] < lov[ax] || av[ax] > hiv[ax]) return;
            continue;
        }
        double ta = (lov[ax] - av[ax]) / dv[ax];
        double tb = (hiv[ax] - av[ax]) / dv[ax];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t1 <= t0) return;

    auto cell_of = [&](double v, double o, std::uint32_t n) {
        auto i = static_cast<std::int64_t>(std::floor((v - o) / g.spacing + 0.5));
        return std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(n) - 1);
    };

    // start just inside to get a well-defined first cell
    const double eps = 1e-12;
    double t = t0;
    const Vec3 p0 = a + d * std::min(t0 + eps * (t1 - t0), 1.0);
    std::int64_t ci = cell_of(p0.x, g.origin.x, g.dims[0]);
    std::int64_t cj = cell_of(p0.y, g.origin.y, g.dims[1]);
    std::int64_t ck = cell_of(p0.z, g.origin.z, g.dims[2]);

    // parameter value of the next cell boundary along each axis
    auto next_boundary = [&](std::int64_t c, int ax) {
        const double o = ax == 0 ? g.origin.x : ax == 1 ? g.origin.y : g.origin.z;
        const double av_ = av[ax], dv_ = dv[ax];
        if (dv_ == 0.0) return std::numeric_limits<double>::infinity();
        const double boundary =
            o + (static_cast<double>(c) + (dv_ > 0.0 ? 0.5 : -0.5)) * g.spacing;
        return (boundary - av_) / dv_;
    };

    double tx = next_boundary(ci, 0);
    double ty = next_boundary(cj, 1);
    double tz = next_boundary(ck, 2);
    const double step_tx = dv[0] != 0.0 ? g.spacing / std::abs(dv[0])
                                        : std::numeric_limits<double>::infinity();
    const double step_ty = dv[1] != 0.0 ? g.spacing / std::abs(dv[1])
                                        : std::numeric_limits<double>::infinity();
    const double step_tz = dv[2] != 0.0 ? g.spacing / std::abs(dv[2])
                                        : std::numeric_limits<double>::infinity();

    while (t < t1) {
        double tn = std::min({tx, ty, tz, t1});
        if (tn > t) {
            const auto idx = g.index(static_cast<std::uint32_t>(ci),
                                     static_cast<std::uint32_t>(cj),
                                     static_cast<std::uint32_t>(ck));
            const double w = (tn - t) * seg_len;
            out.emplace_back(static_cast<std::uint32_t>(idx), w);
            length += w;
        }
        if (tn >= t1) break;
        if (tx <= ty && tx <= tz) {
            ci += dv[0] > 0.0 ? 1 : -1;
            tx += step_tx;
        } else if (ty <= tz) {
            cj += dv[1] > 0.0 ? 1 : -1;
            ty += step_ty;
        } else {
            ck += dv[2] > 0.0 ? 1 : -1;
            tz += step_tz;
        }
        if (ci < 0 || cj < 0 || ck < 0 || ci >= static_cast<std::int64_t>(g.dims[0]) ||
            cj >= static_cast<std::int64_t>(g.dims[1]) ||
            ck >= static_cast<std::int64_t>(g.dims[2]))
            break;
        t = tn;
    }
}

void merge_entries(SparseRow& row) {
    auto& e = row.entries;
    std::sort(e.begin(), e.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t w = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (w > 0 && e[w - 1].first == e[i].first)
            e[w - 1].second += e[i].second;
        else
            e[w++] = e[i];
    }
    e.resize(w);
}

}  // namespace

SparseRow siddon_row(const GridSpec& g, const Vec3& a, const Vec3& b) {
    g.validate();
    if (a == b) throw std::invalid_argument("siddon_row: zero-length ray");
    SparseRow row;
    accumulate_ray(g, a, b, row.entries, row.length);
    merge_entries(row);
    return row;
}

SparseRow siddon_row(const GridSpec& g, std::span<const Vec3> polyline) {
    g.validate();
    if (polyline.size() < 2) throw std::invalid_argument("siddon_row: degenerate polyline");
    SparseRow row;
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i)
        accumulate_ray(g, polyline[i], polyline[i + 1], row.entries, row.length);
    merge_entries(row);
    return row;
}

SparseRaySystem assemble_tomography(const RaySampleSet& samples, const GridSpec& g) {
    if (samples.kind != SampleKind::line_integral)
        throw std::invalid_argument("assemble_tomography expects line-integral samples");
    SparseRaySystem sys;
    sys.grid = g;
    sys.rows.reserve(samples.samples.size());
    sys.rhs.reserve(samples.samples.size());
    for (const RaySample& s : samples.samples) {
        sys.rows.push_back(siddon_row(g, s.x, s.y));
        sys.rhs.push_back(s.value);
    }
    return sys;
}

SparseRaySystem assemble_kinematic_linearized(const RaySampleSet& samples, const GridSpec& g) {
    if (samples.kind != SampleKind::travel_time)
        throw std::invalid_argument("assemble_kinematic_linearized expects travel-time samples");
    SparseRaySystem sys;
    sys.grid = g;
    sys.rows.reserve(samples.samples.size());
    sys.rhs.reserve(samples.samples.size());
    for (const RaySample& s : samples.samples) {
        sys.rows.push_back(siddon_row(g, s.x, s.y));
        double rhs = s.value - dist(s.x, s.y);
        if (rhs < 0.0) {
            rhs = 0.0;
            ++sys.clamped;
        }
        sys.rhs.push_back(rhs);
    }
    return sys;
}

Reconstruction sirt_solve(const SparseRaySystem& sys,
                          const std::vector<std::uint8_t>& support_mask,
                          const SirtOptions& opt) {
    if (sys.rows.empty()) throw std::invalid_argument("sirt_solve: empty system");
    if (sys.rows.size() != sys.rhs.size())
        throw std::invalid_argument("sirt_solve: rows/rhs size mismatch");
    if (opt.iterations < 1 || !(opt.relaxation > 0.0) || opt.relaxation > 2.0)
        throw std::invalid_argument("sirt_solve: invalid iterations or relaxation");
    const std::size_t nvox = sys.grid.count();
    if (!support_mask.empty() && support_mask.size() != nvox)
        throw std::invalid_argument("sirt_solve: mask size mismatch");

    std::vector<double> row_sum(sys.rows.size(), 0.0);
    std::vector<double> col_sum(nvox, 0.0);
    for (std::size_t i = 0; i < sys.rows.size(); ++i) {
        for (const auto& [j, w] : sys.rows[i].entries) {
            row_sum[i] += w;
            col_sum[j] += w;
        }
    }

    double b_norm = 0.0;
    for (std::size_t i = 0; i < sys.rhs.size(); ++i)
        if (row_sum[i] > 0.0) b_norm += sys.rhs[i] * sys.rhs[i] / row_sum[i];
    b_norm = std::sqrt(b_norm);

    std::vector<double> x(nvox, 0.0), resid(sys.rows.size()), update(nvox);
    Reconstruction out;
    out.iterations = opt.iterations;
    out.residual_history.reserve(opt.iterations);

    for (std::size_t it = 0; it < opt.iterations; ++it) {
        double r_norm = 0.0;
        for (std::size_t i = 0; i < sys.rows.size(); ++i) {
            double ax = 0.0;
            for (const auto& [j, w] : sys.rows[i].entries) ax += w * x[j];
            resid[i] = sys.rhs[i] - ax;
            if (row_sum[i] > 0.0) r_norm += resid[i] * resid[i] / row_sum[i];
        }
        std::fill(update.begin(), update.end(), 0.0);
        for (std::size_t i = 0; i < sys.rows.size(); ++i) {
            if (row_sum[i] <= 0.0) continue;
            const double scaled = resid[i] / row_sum[i];
            for (const auto& [j, w] : sys.rows[i].entries) update[j] += w * scaled;
        }
        for (std::size_t j = 0; j < nvox; ++j) {
            if (col_sum[j] <= 0.0) continue;
            x[j] += opt.relaxation * update[j] / col_sum[j];
            if (opt.nonneg && x[j] < 0.0) x[j] = 0.0;
            if (!support_mask.empty() && !support_mask[j]) x[j] = 0.0;
        }
        out.residual_history.push_back(b_norm > 0.0 ? std::sqrt(r_norm) / b_norm
                                                    : std::sqrt(r_norm));
    }
    // final residual after the last update
    {
        double r_norm = 0.0;
        for (std::size_t i = 0; i < sys.rows.size(); ++i) {
            double ax = 0.0;
            for (const auto& [j, w] : sys.rows[i].entries) ax += w * x[j];
            const double r = sys.rhs[i] - ax;
            if (row_sum[i] > 0.0) r_norm += r * r / row_sum[i];
        }
        out.residual_history.push_back(b_norm > 0.0 ? std::sqrt(r_norm) / b_norm
                                                    : std::sqrt(r_norm));
    }

    out.field.grid = sys.grid;
    out.field.values = std::move(x);
    out.mask = support_mask;
    return out;
}

double ray_coverage(const SparseRaySystem& sys, const std::vector<std::uint8_t>& mask,
                    std::size_t min_rays) {
    std::vector<std::uint32_t> hits(sys.grid.count(), 0);
    for (const SparseRow& row : sys.rows)
        for (const auto& [j, w] : row.entries)
            if (w > 0.0) ++hits[j];
    std::size_t total = 0, covered = 0;
    for (std::size_t j = 0; j < hits.size(); ++j) {
        if (!mask.empty() && !mask[j]) continue;
        ++total;
        if (hits[j] >= min_rays) ++covered;
    }
    return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
}

namespace {

double path_energy(const VoxelField& n, const std::vector<Vec3>& p) {
    double e = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
        e += n.trilinear(0.5 * (p[i] + p[i + 1])) * dist(p[i], p[i + 1]);
    return e;
}

// Resample a polyline to roughly uniform segments, then relax the interior
// nodes toward the Fermat minimizer of the model slowness.  Tracing alone
// leaves step-scale zigzag whose length error is first order; after the
// relaxation the travel-time error is second order in the path error.
std::vector<Vec3> polish_path(const VoxelField& n, const std::vector<Vec3>& raw,
                              std::size_t sweeps) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < raw.size(); ++i) total += dist(raw[i], raw[i + 1]);
    const std::size_t nseg =
        std::clamp<std::size_t>(static_cast<std::size_t>(total / n.grid.spacing), 16, 80);
    std::vector<Vec3> p(nseg + 1);
    p.front() = raw.front();
    p.back() = raw.back();
    // arclength resampling
    std::size_t seg = 0;
    double seg_start = 0.0;
    for (std::size_t i = 1; i < nseg; ++i) {
        const double target = total * static_cast<double>(i) / static_cast<double>(nseg);
        while (seg + 2 < raw.size() &&
               seg_start + dist(raw[seg], raw[seg + 1]) < target) {
            seg_start += dist(raw[seg], raw[seg + 1]);
            ++seg;
        }
        const double seg_len = dist(raw[seg], raw[seg + 1]);
        const double t = seg_len > 0.0 ? (target - seg_start) / seg_len : 0.0;
        p[i] = raw[seg] + t * (raw[seg + 1] - raw[seg]);
    }

    const Vec3 lo = n.grid.origin, hi = n.grid.node_max();
    auto clamp_node = [&](Vec3 v) {
        v.x = std::clamp(v.x, lo.x, hi.x);
        v.y = std::clamp(v.y, lo.y, hi.y);
        v.z = std::clamp(v.z, lo.z, hi.z);
        return v;
    };

    double step = 0.25 * n.grid.spacing;
    double energy = path_energy(n, p);
    std::vector<Vec3> trial = p;
    const double fd = 1e-3 * n.grid.spacing;
    for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
        for (std::size_t i = 1; i + 1 < p.size(); ++i) {
            auto local = [&](const Vec3& q) {
                return n.trilinear(0.5 * (p[i - 1] + q)) * dist(p[i - 1], q) +
                       n.trilinear(0.5 * (q + p[i + 1])) * dist(q, p[i + 1]);
            };
            Vec3 grad;
            grad.x = (local(clamp_node(p[i] + Vec3{fd, 0, 0})) -
                      local(clamp_node(p[i] - Vec3{fd, 0, 0}))) /
                     (2.0 * fd);
            grad.y = (local(clamp_node(p[i] + Vec3{0, fd, 0})) -
                      local(clamp_node(p[i] - Vec3{0, fd, 0}))) /
                     (2.0 * fd);
            grad.z = (local(clamp_node(p[i] + Vec3{0, 0, fd})) -
                      local(clamp_node(p[i] - Vec3{0, 0, fd}))) /
                     (2.0 * fd);
            const double gn = grad.norm();
            if (gn > 0.0) trial[i] = clamp_node(p[i] - grad * (step / gn) * std::min(1.0, gn));
        }
        const double cand = path_energy(n, trial);
        if (cand < energy) {
            p = trial;
            energy = cand;
        } else {
            step *= 0.5;
            trial = p;
            if (step < 1e-4 * n.grid.spacing) break;
        }
    }
    return p;
}

}  // namespace

Reconstruction bent_ray_refine(const RaySampleSet& samples, const GridSpec& grid,
                               const BentRayOptions& opt) {
    if (samples.kind != SampleKind::travel_time)
        throw std::invalid_argument("bent_ray_refine expects travel-time samples");
    opt.forward_grid.validate();
    if (!(opt.support_radius > 0.0))
        throw std::invalid_argument("bent_ray_refine: support_radius must be > 0");

    const std::vector<std::uint8_t> mask = ball_mask(grid, opt.support_radius);
    // group samples by source (bit-exact coordinates)
    std::map<std::array<double, 3>, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < samples.samples.size(); ++i) {
        const Vec3& y = samples.samples[i].y;
        by_source[{y.x, y.y, y.z}].push_back(i);
    }

    SparseRaySystem sys = assemble_kinematic_linearized(samples, grid);
    Reconstruction recon = sirt_solve(sys, mask, opt.sirt);
    recon.outer_residuals.push_back(recon.residual_history.back());

    for (std::size_t outer = 0; outer < opt.outer_iterations; ++outer) {
        // current model on the forward grid: n = 1 + interpolated update
        VoxelField n_fwd(opt.forward_grid, 1.0);
        const GridSpec& fg = opt.forward_grid;
        for (std::uint32_t k = 0; k < fg.dims[2]; ++k)
            for (std::uint32_t j = 0; j < fg.dims[1]; ++j)
                for (std::uint32_t i = 0; i < fg.dims[0]; ++i) {
                    const Vec3 p = fg.node(i, j, k);
                    if (!recon.field.grid.inside_nodes(p)) continue;
                    const double delta = recon.field.trilinear(p);
                    n_fwd.at(i, j, k) = std::max(1.0, 1.0 + delta);
                }

        SparseRaySystem bent;
        bent.grid = grid;
        bent.rows.reserve(samples.samples.size());
        bent.rhs.assign(samples.samples.size(), 0.0);
        bent.rows.resize(samples.samples.size());
        std::size_t fallbacks = 0;

        for (const auto& [ykey, idxs] : by_source) {
            const Vec3 y{ykey[0], ykey[1], ykey[2]};
            const TauField tau = solve_tau(n_fwd, y);
            for (std::size_t si : idxs) {
                const RaySample& s = samples.samples[si];
                double rhs;
                try {
                    const auto raw = trace_geodesic(tau, s.x, 0.5 * fg.spacing);
                    const auto path = polish_path(n_fwd, raw, 32);
                    bent.rows[si] = siddon_row(grid, path);
                    double plen = 0.0;
                    for (std::size_t p = 0; p + 1 < path.size(); ++p)
                        plen += dist(path[p], path[p + 1]);
                    rhs = s.value - plen;
                } catch (const std::exception&) {
                    ++fallbacks;
                    bent.rows[si] = siddon_row(grid, s.x, s.y);
                    rhs = s.value - dist(s.x, s.y);
                }
                if (rhs < 0.0) {
                    rhs = 0.0;
                    ++bent.clamped;
                }
                bent.rhs[si] = rhs;
            }
        }

        Reconstruction next = sirt_solve(bent, mask, opt.sirt);
        const double best = recon.residual_history.back();
        const double cur = next.residual_history.back();
        if (cur < best) {
            // adopt the better-fitting model, keeping the full residual trail
            next.outer_residuals = recon.outer_residuals;
            next.straight_fallbacks = recon.straight_fallbacks + fallbacks;
            next.outer_residuals.push_back(cur);
            recon = std::move(next);
        } else {
            recon.outer_residuals.push_back(cur);  // recorded, not adopted
            recon.straight_fallbacks += fallbacks;
        }
        if (best > 0.0 && (best - cur) / best < opt.stop_improvement) break;
    }
    return recon;
}

EvalMetrics evaluate(const Reconstruction& recon, const BumpSum& phantom) {
    const GridSpec& g = recon.field.grid;
    g.validate();
    if (recon.field.values.size() != g.count())
        throw std::invalid_argument("evaluate: grid/value size mismatch");

    EvalMetrics m;
    double num = 0.0, den = 0.0;
    for (std::uint32_t k = 0; k < g.dims[2]; ++k)
        for (std::uint32_t j = 0; j < g.dims[1]; ++j)
            for (std::uint32_t i = 0; i < g.dims[0]; ++i) {
                const std::size_t idx = g.index(i, j, k);
                if (!recon.mask.empty() && !recon.mask[idx]) continue;
                const double target = phantom.eval(g.node(i, j, k)) - phantom.baseline;
                const double diff = recon.field.values[idx] - target;
                num += diff * diff;
                den += target * target;
                m.max_err = std::max(m.max_err, std::abs(diff));
            }
    m.rel_l2 = den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? std::sqrt(num) : 0.0);
    m.residual = recon.residual_history.empty() ? 0.0 : recon.residual_history.back();
    return m;
}

}  // namespace itomo
