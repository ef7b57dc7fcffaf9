#include "doctest.h"

#include "itomo/inversion.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>

using namespace itomo;

namespace {

// analytic clipping oracle: length of segment within the cell box
double clipped_length(const GridSpec& g, const Vec3& a, const Vec3& b) {
    const Vec3 lo = g.cell_min(), hi = g.cell_max();
    const Vec3 d = b - a;
    double t0 = 0.0, t1 = 1.0;
    const double av[3] = {a.x, a.y, a.z}, dv[3] = {d.x, d.y, d.z};
    const double lov[3] = {lo.x, lo.y, lo.z}, hiv[3] = {hi.x, hi.y, hi.z};
    for (int ax = 0; ax < 3; ++ax) {
        if (dv[ax] == 0.0) {
            if (av[ax] < lov[ax] || av[ax] > hiv[ax]) return 0.0;
            continue;
        }
        double ta = (lov[ax] - av[ax]) / dv[ax];
        double tb = (hiv[ax] - av[ax]) / dv[ax];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return t1 > t0 ? (t1 - t0) * d.norm() : 0.0;
}

RaySampleSet make_line_samples(std::vector<RaySample> v) {
    RaySampleSet s;
    s.kind = SampleKind::line_integral;
    s.samples = std::move(v);
    return s;
}

}  // namespace

TEST_CASE("siddon_row on simple rays") {
    GridSpec g;
    g.dims = {4, 4, 4};
    g.spacing = 1.0;
    g.origin = Vec3{0.5, 0.5, 0.5};  // cells tile [0,4]^3

    // axis-aligned ray through one row of voxels: weight 1 per voxel
    auto row = siddon_row(g, Vec3{-1.0, 1.0, 1.0}, Vec3{5.0, 1.0, 1.0});
    CHECK(row.entries.size() == 4);
    for (const auto& [j, w] : row.entries) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.length == doctest::Approx(4.0).epsilon(1e-12));

    // diagonal across a single voxel: one weight of h*sqrt(3)
    auto diag = siddon_row(g, Vec3{1.0, 1.0, 1.0}, Vec3{2.0, 2.0, 2.0});
    double total = 0.0;
    for (const auto& [j, w] : diag.entries) total += w;
    CHECK(total == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));

    CHECK_THROWS_AS(siddon_row(g, Vec3{1, 1, 1}, Vec3{1, 1, 1}), std::invalid_argument);
}

TEST_CASE("siddon_row sum equals the clipped length") {
    const GridSpec g = centered_grid(17, 1.3);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-2.2, 2.2);
    for (int trial = 0; trial < 300; ++trial) {
        const Vec3 a{u(rng), u(rng), u(rng)};
        const Vec3 b{u(rng), u(rng), u(rng)};
        if (dist(a, b) < 1e-6) continue;
        const auto row = siddon_row(g, a, b);
        const double want = clipped_length(g, a, b);
        CHECK(std::abs(row.length - want) <= 1e-9 * (1.0 + want));
        double s = 0.0;
        for (const auto& [j, w] : row.entries) {
            CHECK(w >= 0.0);
            s += w;
        }
        CHECK(std::abs(s - want) <= 1e-9 * (1.0 + want));
    }

    // polyline rows merge repeated voxels and sum segment-wise
    const Vec3 p0{-2.0, 0.1, 0.2}, p1{0.0, 0.15, 0.1}, p2{2.0, -0.1, 0.3};
    const std::vector<Vec3> poly{p0, p1, p2};
    const auto prow = siddon_row(g, poly);
    const double want = clipped_length(g, p0, p1) + clipped_length(g, p1, p2);
    CHECK(prow.length == doctest::Approx(want).epsilon(1e-9));
    for (std::size_t i = 1; i < prow.entries.size(); ++i)
        CHECK(prow.entries[i - 1].first < prow.entries[i].first);
}

TEST_CASE("sirt_solve on a trivially separable system") {
    GridSpec g;
    g.dims = {2, 2, 2};
    g.spacing = 1.0;
    g.origin = Vec3{0, 0, 0};
    SparseRaySystem sys;
    sys.grid = g;
    sys.rows.resize(2);
    sys.rows[0].entries = {{0, 1.0}};
    sys.rows[1].entries = {{3, 1.0}};
    sys.rhs = {3.0, 4.0};

    SirtOptions opt;
    opt.iterations = 4;
    opt.nonneg = false;
    const Reconstruction rec = sirt_solve(sys, {}, opt);
    CHECK(rec.field.values[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rec.field.values[3] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(rec.residual_history.back() <= 1e-12);

    CHECK_THROWS_AS(sirt_solve(SparseRaySystem{}, {}, opt), std::invalid_argument);
    SirtOptions bad = opt;
    bad.relaxation = 2.5;
    CHECK_THROWS_AS(sirt_solve(sys, {}, bad), std::invalid_argument);
}

TEST_CASE("consistent random systems: monotone residual and convergence") {
    const GridSpec g = centered_grid(8, 1.0);
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(-1.6, 1.6);
    std::uniform_real_distribution<double> amp(0.0, 1.0);

    std::vector<double> truth(g.count());
    for (double& v : truth) v = amp(rng);

    SparseRaySystem sys;
    sys.grid = g;
    for (int i = 0; i < 300; ++i) {
        Vec3 a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
        if (dist(a, b) < 0.5) continue;
        auto row = siddon_row(g, a, b);
        if (row.entries.empty()) continue;
        double dot = 0.0;
        for (const auto& [j, w] : row.entries) dot += w * truth[j];
        sys.rows.push_back(std::move(row));
        sys.rhs.push_back(dot);
    }

    SirtOptions opt;
    opt.iterations = 40000;
    opt.nonneg = true;  // truth is non-negative
    const Reconstruction rec = sirt_solve(sys, {}, opt);
    for (std::size_t i = 1; i < rec.residual_history.size(); ++i)
        CHECK(rec.residual_history[i] <= rec.residual_history[i - 1] + 1e-12);
    CHECK(rec.residual_history.back() < 1e-6);
}

TEST_CASE("support mask zeroes the exterior") {
    const GridSpec g = centered_grid(8, 1.0);
    const auto mask = ball_mask(g, 0.6);
    SparseRaySystem sys;
    sys.grid = g;
    auto row = siddon_row(g, Vec3{-2, 0.01, 0.02}, Vec3{2, -0.03, 0.01});
    sys.rows.push_back(row);
    sys.rhs.push_back(1.0);
    const Reconstruction rec = sirt_solve(sys, mask, {});
    for (std::size_t j = 0; j < mask.size(); ++j)
        if (!mask[j]) CHECK(rec.field.values[j] == 0.0);
}

TEST_CASE("SIRT matches a dense least-squares solve on a consistent system") {
    const GridSpec g = centered_grid(8, 1.0);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> amp(0.0, 1.0);

    std::vector<double> truth(g.count());
    for (double& v : truth) v = amp(rng);

    SparseRaySystem sys;
    sys.grid = g;
    while (sys.rows.size() < 200) {
        // random chords of a sphere enclosing the box
        Vec3 a{gauss(rng), gauss(rng), gauss(rng)}, b{gauss(rng), gauss(rng), gauss(rng)};
        if (a.norm() < 1e-3 || b.norm() < 1e-3) continue;
        a = a.normalized() * 2.0;
        b = b.normalized() * 2.0;
        if (dist(a, b) < 1.0) continue;
        auto row = siddon_row(g, a, b);
        if (row.entries.size() < 3) continue;
        double dot = 0.0;
        for (const auto& [j, w] : row.entries) dot += w * truth[j];
        sys.rows.push_back(std::move(row));
        sys.rhs.push_back(dot);
    }

    SirtOptions opt;
    opt.iterations = 40000;
    opt.relaxation = 1.9;  // top of the convergent range; no projections here
    opt.nonneg = false;
    const Reconstruction rec = sirt_solve(sys, {}, opt);

    // dense oracle: the weighted minimum-norm solution x = C A^T (A C A^T)^{-1} b
    // with C the inverse column-sum scaling, restricted to touched columns
    const auto n = static_cast<Eigen::Index>(g.count());
    const auto m = static_cast<Eigen::Index>(sys.rows.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
        for (const auto& [j, w] : sys.rows[static_cast<std::size_t>(i)].entries)
            A(i, static_cast<Eigen::Index>(j)) = w;
    Eigen::VectorXd c = A.colwise().sum();
    Eigen::VectorXd cinv = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j)
        if (c(j) > 0.0) cinv(j) = 1.0 / c(j);
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), m);
    Eigen::MatrixXd ACA = A * cinv.asDiagonal() * A.transpose();
    Eigen::VectorXd lambda = ACA.ldlt().solve(b);
    Eigen::VectorXd dense = cinv.asDiagonal() * A.transpose() * lambda;

    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double diff = rec.field.values[static_cast<std::size_t>(j)] - dense(j);
        num += diff * diff;
        den += dense(j) * dense(j);
    }
    CHECK(std::sqrt(num / den) <= 1e-4);
}

TEST_CASE("kinematic assembly clamps negative right-hand sides") {
    RaySampleSet s;
    s.kind = SampleKind::travel_time;
    s.samples.push_back({Vec3{-2, 0, 0}, Vec3{2, 0.01, 0}, 4.2, 0.0, 1});   // tau > |x-y|
    s.samples.push_back({Vec3{0, -2, 0}, Vec3{0, 2, 0.01}, 3.9, 0.0, 1});   // tau < |x-y|
    const GridSpec g = centered_grid(8, 1.0);
    const auto sys = assemble_kinematic_linearized(s, g);
    CHECK(sys.rows.size() == 2);
    CHECK(sys.clamped == 1);
    CHECK(sys.rhs[1] == 0.0);
    CHECK(sys.rhs[0] > 0.0);

    CHECK_THROWS_AS(assemble_tomography(s, g), std::invalid_argument);
}

TEST_CASE("tomography assembly and zero data") {
    const GridSpec g = centered_grid(12, 1.0);
    std::vector<RaySample> v;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < 60; ++i) {
        Vec3 a{gauss(rng), gauss(rng), gauss(rng)}, b{gauss(rng), gauss(rng), gauss(rng)};
        a = a.normalized() * 2.0;
        b = b.normalized() * 2.0;
        if (dist(a, b) < 1.0) continue;
        v.push_back({a, b, 0.0, 0.0, 1});
    }
    const RaySampleSet samples = make_line_samples(v);
    const auto sys = assemble_tomography(samples, g);
    CHECK(sys.rows.size() == samples.samples.size());  // row/sample equality

    const auto mask = ball_mask(g, 0.8);
    const Reconstruction rec = sirt_solve(sys, mask, {});
    double norm = 0.0;
    for (double x : rec.field.values) norm += x * x;
    CHECK(std::sqrt(norm) <= 1e-12);

    const double cov = ray_coverage(sys, mask, 1);
    CHECK(cov > 0.0);
    CHECK(cov <= 1.0);
}

TEST_CASE("evaluate metrics") {
    const GridSpec g = centered_grid(12, 1.0);
    BumpSum q;
    q.bumps.push_back({Vec3{0.1, 0, 0}, 0.4, 1.0});

    Reconstruction perfect;
    perfect.field = rasterize(q, g);
    perfect.mask = ball_mask(g, 0.8);
    const EvalMetrics m0 = evaluate(perfect, q);
    CHECK(m0.rel_l2 == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(m0.max_err == doctest::Approx(0.0).epsilon(1e-14));

    // zero reconstruction against a zero phantom: guarded 0/0
    Reconstruction zero;
    zero.field = VoxelField(g, 0.0);
    zero.mask = perfect.mask;
    const EvalMetrics mz = evaluate(zero, BumpSum{});
    CHECK(mz.rel_l2 == 0.0);

    // single-voxel perturbation: l2 error equals delta/|phantom| inside the mask
    Reconstruction bumped = perfect;
    std::size_t inside = 0;
    while (!bumped.mask[inside]) ++inside;
    const double delta = 0.37;
    bumped.field.values[inside] += delta;
    double ref = 0.0;
    for (std::uint32_t k = 0; k < g.dims[2]; ++k)
        for (std::uint32_t j = 0; j < g.dims[1]; ++j)
            for (std::uint32_t i = 0; i < g.dims[0]; ++i) {
                const std::size_t idx = g.index(i, j, k);
                if (!bumped.mask[idx]) continue;
                const double t = q.eval(g.node(i, j, k));
                ref += t * t;
            }
    const EvalMetrics mb = evaluate(bumped, q);
    CHECK(mb.rel_l2 == doctest::Approx(delta / std::sqrt(ref)).epsilon(1e-12));
    CHECK(mb.max_err == doctest::Approx(delta).epsilon(1e-12));

    // the refractive phantom baseline is subtracted before comparison
    BumpSum n;
    n.baseline = 1.0;
    n.bumps.push_back({Vec3{0.1, 0, 0}, 0.4, 0.2});
    Reconstruction dn;
    dn.field = VoxelField(g, 0.0);
    for (std::uint32_t k = 0; k < g.dims[2]; ++k)
        for (std::uint32_t j = 0; j < g.dims[1]; ++j)
            for (std::uint32_t i = 0; i < g.dims[0]; ++i)
                dn.field.values[g.index(i, j, k)] = n.eval(g.node(i, j, k)) - 1.0;
    dn.mask = perfect.mask;
    CHECK(evaluate(dn, n).rel_l2 == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("bent-ray refinement leaves homogeneous data unchanged") {
    // tau = |x-y| exactly: the linearized system has zero rhs and the zero
    // field; refinement must not degrade it
    RaySampleSet s;
    s.kind = SampleKind::travel_time;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gauss;
    while (s.samples.size() < 40) {
        Vec3 a{gauss(rng), gauss(rng), gauss(rng)}, b{gauss(rng), gauss(rng), gauss(rng)};
        if (a.norm() < 1e-3 || b.norm() < 1e-3) continue;
        a = a.normalized() * 2.0;
        b = b.normalized() * 2.0;
        if (dist(a, b) < 1.5) continue;
        s.samples.push_back({a, b, dist(a, b), 0.0, 1});
    }
    const GridSpec grid = centered_grid(12, 1.25);
    BentRayOptions opt;
    opt.outer_iterations = 2;
    opt.sirt.iterations = 50;
    opt.forward_grid = centered_grid(33, 2.5);
    opt.support_radius = 1.0;
    const Reconstruction rec = bent_ray_refine(s, grid, opt);
    double norm = 0.0;
    for (double v : rec.field.values) norm += v * v;
    CHECK(std::sqrt(norm) <= 1e-9);
    REQUIRE(!rec.outer_residuals.empty());
    // adopted models never fit worse than their predecessors
    CHECK(rec.residual_history.back() <= rec.outer_residuals.front() + 1e-12);

    CHECK_THROWS_AS(bent_ray_refine(s, grid, BentRayOptions{}), std::invalid_argument);
}
