#include "CLI11.hpp"
#include "json.hpp"

#include "itomo/extraction.hpp"
#include "itomo/forward.hpp"
#include "itomo/geometry.hpp"
#include "itomo/inversion.hpp"
#include "itomo/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

using namespace itomo;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

nlohmann::json coverage_to_json(const CoverageReport& rep) {
    nlohmann::json j;
    j["n_samples"] = rep.n_samples;
    j["n_uncovered"] = rep.n_uncovered;
    if (rep.worst_point)
        j["worst_point"] = {rep.worst_point->x, rep.worst_point->y, rep.worst_point->z};
    else
        j["worst_point"] = nullptr;
    j["ell"] = rep.ell;
    return j;
}

GridSpec parse_grid(const std::string& spec) {
    GridSpec g;
    unsigned nx = 0, ny = 0, nz = 0;
    double spacing = 0.0;
    if (std::sscanf(spec.c_str(), "%u,%u,%u,%lf", &nx, &ny, &nz, &spacing) != 4)
        throw ConfigError("--grid expects nx,ny,nz,spacing");
    g.dims = {nx, ny, nz};
    g.spacing = spacing;
    // centered on the origin
    g.origin = Vec3{-0.5 * spacing * (nx - 1.0), -0.5 * spacing * (ny - 1.0),
                    -0.5 * spacing * (nz - 1.0)};
    g.validate();
    return g;
}

int cmd_geometry_check(double r0, double r, const std::string& ell_str, std::size_t samples,
                       std::uint64_t seed, const std::string& model, double n1) {
    const BallGeometry g(r0, r);
    double ell;
    if (ell_str == "auto") {
        const double model_min =
            model == "helmholtz" ? min_ell_helmholtz(g, n1) : min_ell_schrodinger(g);
        ell = std::max(ell_star(g), model_min) * (1.0 + 1e-9);
    } else {
        ell = std::stod(ell_str);
    }
    const CoverageReport rep = coverage_check(g, ell, samples, seed);
    std::cout << coverage_to_json(rep).dump() << "\n";
    return kExitOk;
}

int cmd_synth(const std::string& config_path, const std::string& out_path) {
    const RunConfig cfg = load_config_file(config_path);
    const ValidatedConfig vc = validate_config(cfg);
    const PhaselessDataset ds = run_synth(vc.config);
    write_dataset(ds, out_path);
    std::cout << "records=" << ds.records.size() << " out=" << out_path << "\n";
    return kExitOk;
}

int cmd_extract(const std::string& in_path, const std::string& out_path, std::size_t count_m) {
    const PhaselessDataset ds = read_dataset(in_path);
    AssembleOptions opt;
    opt.count_m = count_m;
    const AssembleResult res = assemble_ray_samples(ds, opt);
    write_samples(res.samples, out_path);
    std::cout << "samples=" << res.samples.samples.size()
              << " failed_records=" << res.failed_records
              << " duplicates_merged=" << res.duplicates_merged
              << " max_spread=" << res.max_spread << " out=" << out_path << "\n";
    return kExitOk;
}

int cmd_invert(const std::string& samples_path, const std::string& grid_spec,
               const std::string& model, std::size_t bent_ray, std::size_t iters,
               double relaxation, bool nonneg, double r0, double r, std::uint32_t forward_n,
               double forward_margin, const std::string& out_path) {
    const RaySampleSet samples = read_samples(samples_path);
    const GridSpec grid = parse_grid(grid_spec);
    if (model != "tomo" && model != "kinematic")
        throw ConfigError("--model must be tomo or kinematic");

    std::vector<std::uint8_t> mask;
    if (r0 > 0.0) mask = ball_mask(grid, r0);

    SirtOptions sopt;
    sopt.iterations = iters;
    sopt.relaxation = relaxation;
    sopt.nonneg = nonneg;

    Reconstruction recon;
    SparseRaySystem sys;
    if (model == "tomo") {
        sys = assemble_tomography(samples, grid);
        recon = sirt_solve(sys, mask, sopt);
    } else {
        sys = assemble_kinematic_linearized(samples, grid);
        if (bent_ray == 0) {
            recon = sirt_solve(sys, mask, sopt);
        } else {
            if (!(r0 > 0.0) || !(r > r0))
                throw ConfigError("--bent-ray needs --r0 and --r for the travel-time grid");
            BentRayOptions bopt;
            bopt.outer_iterations = bent_ray;
            bopt.sirt = sopt;
            bopt.forward_grid = centered_grid(forward_n, forward_margin * r);
            bopt.support_radius = r0;
            recon = bent_ray_refine(samples, grid, bopt);
        }
    }
    write_vxf1(recon.field, out_path);
    nlohmann::json j;
    j["rows"] = sys.rows.size();
    j["clamped"] = sys.clamped;
    j["coverage"] = ray_coverage(sys, mask, 5);
    j["residual"] = recon.residual_history.empty() ? 0.0 : recon.residual_history.back();
    j["straight_fallbacks"] = recon.straight_fallbacks;
    j["out"] = out_path;
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& recon_path, const std::string& phantom_path,
                 const std::string& report_path, double r0) {
    Reconstruction recon;
    recon.field = read_vxf1(recon_path);
    if (r0 > 0.0) recon.mask = ball_mask(recon.field.grid, r0);
    const BumpSum phantom = load_phantom_file(phantom_path);
    const EvalMetrics m = evaluate(recon, phantom);
    nlohmann::json j;
    j["rel_l2"] = m.rel_l2;
    j["max_err"] = m.max_err;
    std::cout << j.dump() << "\n";
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << j.dump(2) << "\n";
        if (!out) throw std::runtime_error("cannot write report: " + report_path);
    }
    return kExitOk;
}

int cmd_end2end(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg = load_config_file(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    const RunReport rep = run_end_to_end(cfg);
    std::cout << "rel_l2=" << rep.metrics.rel_l2 << " max_err=" << rep.metrics.max_err
              << " residual=" << rep.metrics.residual << " coverage=" << rep.coverage << "\n"
              << "records=" << rep.records << " samples=" << rep.samples
              << " clamped=" << rep.clamped << " failed_records=" << rep.failed_records
              << "\n";
    for (const auto& [k, v] : rep.artifacts) std::cout << k << ": " << v << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phaseless interference-wave tomography laboratory"};
    app.require_subcommand(1);

    // geometry-check
    auto* gc = app.add_subcommand("geometry-check",
                                  "sample the shadow set and count receivers not covered "
                                  "by the auxiliary triad");
    double gc_r0 = 0.0, gc_r = 0.0, gc_n1 = 1.0;
    std::string gc_ell = "auto", gc_model = "schrodinger";
    std::size_t gc_samples = 100000;
    std::uint64_t gc_seed = 1;
    gc->add_option("--r0", gc_r0, "inner (opaque) ball radius")->required();
    gc->add_option("--r", gc_r, "measurement sphere radius")->required();
    gc->add_option("--ell", gc_ell, "auxiliary distance, or auto");
    gc->add_option("--samples", gc_samples, "sphere sample count");
    gc->add_option("--seed", gc_seed, "lattice scrambling seed");
    gc->add_option("--model", gc_model, "schrodinger|helmholtz (for --ell auto)");
    gc->add_option("--n1", gc_n1, "refractive bound (helmholtz auto threshold)");

    // synth
    auto* sy = app.add_subcommand("synth", "synthesize a phaseless interference dataset");
    std::string sy_config, sy_out = "dataset.pds";
    sy->add_option("--config", sy_config, "run configuration JSON")->required();
    sy->add_option("--out", sy_out, "output dataset file");

    // extract
    auto* ex = app.add_subcommand("extract",
                                  "reduce a dataset to line integrals or travel times");
    std::string ex_in, ex_out = "samples.jsonl";
    std::size_t ex_count_m = 8;
    ex->add_option("--in", ex_in, "input dataset file")->required();
    ex->add_option("--out", ex_out, "output samples file (JSON lines)");
    ex->add_option("--count-m", ex_count_m, "fit members per record");

    // invert
    auto* in = app.add_subcommand("invert", "reconstruct the medium from ray samples");
    std::string in_samples, in_grid, in_model = "tomo", in_out = "recon.vxf";
    std::size_t in_bent = 0, in_iters = 200;
    double in_relax = 1.0, in_r0 = 0.0, in_r = 0.0, in_fwd_margin = 1.25;
    std::uint32_t in_fwd_n = 81;
    bool in_no_nonneg = false;
    in->add_option("--samples", in_samples, "ray samples file")->required();
    in->add_option("--grid", in_grid, "nx,ny,nz,spacing (centered on the origin)")->required();
    in->add_option("--model", in_model, "tomo|kinematic");
    in->add_option("--bent-ray", in_bent, "bent-ray refinement outer iterations");
    in->add_option("--iters", in_iters, "solver sweeps");
    in->add_option("--relax", in_relax, "solver relaxation in (0,2]");
    in->add_flag("--no-nonneg", in_no_nonneg, "disable the non-negativity projection");
    in->add_option("--r0", in_r0, "support ball radius (enables the support mask)");
    in->add_option("--r", in_r, "measurement sphere radius (bent-ray grid)");
    in->add_option("--forward-n", in_fwd_n, "bent-ray travel-time grid nodes per axis");
    in->add_option("--forward-margin", in_fwd_margin, "bent-ray grid half-extent / r");
    in->add_option("--out", in_out, "output reconstruction grid");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compare a reconstruction against a phantom");
    std::string ev_recon, ev_phantom, ev_report;
    double ev_r0 = 0.0;
    ev->add_option("--recon", ev_recon, "reconstruction grid file")->required();
    ev->add_option("--phantom", ev_phantom, "phantom JSON file")->required();
    ev->add_option("--report", ev_report, "metrics report output path");
    ev->add_option("--r0", ev_r0, "support ball radius (restricts the comparison)");

    // end2end
    auto* ee = app.add_subcommand("end2end", "run synth, extract, invert and evaluate");
    std::string ee_config, ee_out_dir;
    ee->add_option("--config", ee_config, "run configuration JSON")->required();
    ee->add_option("--out-dir", ee_out_dir, "override the configured output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gc->parsed())
            return cmd_geometry_check(gc_r0, gc_r, gc_ell, gc_samples, gc_seed, gc_model, gc_n1);
        if (sy->parsed()) return cmd_synth(sy_config, sy_out);
        if (ex->parsed()) return cmd_extract(ex_in, ex_out, ex_count_m);
        if (in->parsed())
            return cmd_invert(in_samples, in_grid, in_model, in_bent, in_iters, in_relax,
                              !in_no_nonneg, in_r0, in_r, in_fwd_n, in_fwd_margin, in_out);
        if (ev->parsed()) return cmd_evaluate(ev_recon, ev_phantom, ev_report, ev_r0);
        if (ee->parsed()) return cmd_end2end(ee_config, ee_out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "stage error: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitConfig;
}
