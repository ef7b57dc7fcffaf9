#include "itomo/pipeline.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace itomo {

using nlohmann::json;
using std::numbers::pi;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Model model_from_string(const std::string& s) {
    if (s == "schrodinger") return Model::schrodinger;
    if (s == "helmholtz") return Model::helmholtz;
    throw ConfigError("model must be \"schrodinger\" or \"helmholtz\"");
}

BumpSum phantom_from_config(const json& j, const std::string& base_dir) {
    if (j.contains("phantom_file")) {
        std::filesystem::path p = j.at("phantom_file").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        if (!std::filesystem::exists(p))
            throw ConfigError("phantom_file does not exist: " + p.string());
        return load_phantom_file(p.string());
    }
    if (j.contains("phantom")) return phantom_from_json_text(j.at("phantom").dump());
    throw ConfigError("config needs either \"phantom\" (inline) or \"phantom_file\"");
}

RunConfig config_from_json(const json& j, const std::string& base_dir) {
    RunConfig c;
    try {
        c.seed = j.value("seed", std::uint64_t{1});
        c.out_dir = j.value("out_dir", std::string{"."});
        const auto& geo = j.at("geometry");
        c.r0 = geo.at("r0").get<double>();
        c.r = geo.at("r").get<double>();
        c.model = model_from_string(j.at("model").get<std::string>());
        c.phantom = phantom_from_config(j, base_dir);
        c.n1 = j.value("n1", 1.0);
        if (j.contains("ell") && j.at("ell").is_number()) {
            c.ell_auto = false;
            c.ell = j.at("ell").get<double>();
        } else if (!j.contains("ell") || j.at("ell") == "auto") {
            c.ell_auto = true;
        } else {
            throw ConfigError("ell must be a number or \"auto\"");
        }
        c.sources = j.value("sources", std::size_t{64});
        c.receivers_per_cap = j.value("receivers_per_cap", std::size_t{200});
        if (j.contains("sweep")) {
            const auto& sw = j.at("sweep");
            c.sweep.k0 = sw.at("k0").get<double>();
            c.sweep.k_max = sw.at("k_max").get<double>();
            c.sweep.count = sw.at("count").get<std::size_t>();
        }
        c.count_m = j.value("count_m", std::size_t{8});
        if (j.contains("grid")) {
            c.grid_n = j.at("grid").value("n", 48u);
            c.grid_margin = j.at("grid").value("margin", 1.25);
        }
        if (j.contains("forward_grid")) {
            c.forward_n = j.at("forward_grid").value("n", 81u);
            c.forward_margin = j.at("forward_grid").value("margin", 1.25);
        }
        if (j.contains("solver")) {
            const auto& so = j.at("solver");
            c.solver.iterations = so.value("iterations", std::size_t{200});
            c.solver.relaxation = so.value("relaxation", 1.0);
            c.solver.nonneg = so.value("nonneg", true);
        }
        c.bent_ray = j.value("bent_ray", std::size_t{0});
        c.remainder_c = j.value("remainder_c", 0.0);
        c.noise_sigma = j.value("noise_sigma", 0.0);
        c.unit_amplitude = j.value("unit_amplitude", false);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config schema violation: ") + e.what());
    }
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["geometry"] = {{"r0", c.r0}, {"r", c.r}};
    j["model"] = c.model == Model::schrodinger ? "schrodinger" : "helmholtz";
    j["phantom"] = json::parse(phantom_to_json_text(c.phantom));
    j["n1"] = c.n1;
    if (c.ell_auto && c.ell == 0.0)
        j["ell"] = "auto";
    else
        j["ell"] = c.ell;
    j["sources"] = c.sources;
    j["receivers_per_cap"] = c.receivers_per_cap;
    j["sweep"] = {{"k0", c.sweep.k0}, {"k_max", c.sweep.k_max}, {"count", c.sweep.count}};
    j["count_m"] = c.count_m;
    j["grid"] = {{"n", c.grid_n}, {"margin", c.grid_margin}};
    j["forward_grid"] = {{"n", c.forward_n}, {"margin", c.forward_margin}};
    j["solver"] = {{"iterations", c.solver.iterations},
                   {"relaxation", c.solver.relaxation},
                   {"nonneg", c.solver.nonneg}};
    j["bent_ray"] = c.bent_ray;
    j["remainder_c"] = c.remainder_c;
    j["noise_sigma"] = c.noise_sigma;
    j["unit_amplitude"] = c.unit_amplitude;
    return j;
}

}  // namespace

RunConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j, "");
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

std::string config_to_json_text(const RunConfig& cfg) { return config_to_json(cfg).dump(2); }

ValidatedConfig validate_config(const RunConfig& raw) {
    ValidatedConfig out;
    out.config = raw;
    RunConfig& c = out.config;

    if (!(c.r0 > 0.0) || !(c.r0 < c.r)) throw ConfigError("geometry requires 0 < r0 < r");
    const BallGeometry g(c.r0, c.r);

    try {
        validate_phantom(c.phantom, g);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (c.model == Model::schrodinger && c.phantom.baseline != 0.0)
        throw ConfigError("potential phantoms must have baseline 0");
    if (c.model == Model::helmholtz) {
        if (c.phantom.baseline != 1.0)
            throw ConfigError("refractive phantoms must have baseline 1");
        if (c.n1 < 1.0) throw ConfigError("n1 must be >= 1");
        // bound check on a sample grid plus the bump centers
        double peak = 1.0;
        for (const Bump& b : c.phantom.bumps)
            peak = std::max(peak, c.phantom.eval(b.center));
        const int ns = 25;
        for (int a = 0; a < ns; ++a)
            for (int bidx = 0; bidx < ns; ++bidx)
                for (int cc = 0; cc < ns; ++cc) {
                    const Vec3 p = Vec3{-1.0 + 2.0 * a / (ns - 1.0),
                                        -1.0 + 2.0 * bidx / (ns - 1.0),
                                        -1.0 + 2.0 * cc / (ns - 1.0)} *
                                   c.r0;
                    peak = std::max(peak, c.phantom.eval(p));
                }
        if (peak > c.n1 + 1e-9)
            throw ConfigError("refractive phantom exceeds the stated bound n1");
    }

    // auxiliary distance: resolve or verify against both thresholds
    const double model_min = c.model == Model::schrodinger
                                 ? min_ell_schrodinger(g)
                                 : min_ell_helmholtz(g, c.n1);
    const double required = std::max(ell_star(g), model_min);
    if (c.ell_auto) {
        c.ell = required * (1.0 + 1e-9);  // strictly above both thresholds
        out.warnings.push_back("ell resolved automatically to " + std::to_string(c.ell));
    } else {
        if (c.ell < ell_star(g))
            throw ConfigError("ell below the triad coverage threshold 2*r0*r/sqrt(r^2-r0^2)");
        if (c.ell <= model_min)
            throw ConfigError(
                c.model == Model::schrodinger
                    ? "ell must exceed r*sqrt(8) for the potential model"
                    : "ell must exceed r*sqrt((1+2*n1)^2-1) for the refractive model");
    }

    try {
        c.sweep.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (c.count_m < 2 || c.count_m > c.sweep.count)
        throw ConfigError("count_m must lie in [2, sweep.count]");
    if (c.sources < 1 || c.receivers_per_cap < 1)
        throw ConfigError("sources and receivers_per_cap must be >= 1");

    if (c.model == Model::helmholtz) {
        const double rho_max = std::hypot(c.r, c.ell) + c.r;
        if (!(c.sweep.spacing() < pi / rho_max))
            throw ConfigError(
                "sweep too coarse: spacing must satisfy the Nyquist rule dk < pi/max|x-z|");
        if (c.forward_n < 2) throw ConfigError("forward_grid.n must be >= 2");
        const double spacing = 2.0 * c.forward_margin * c.r / c.forward_n;
        const double hull = c.forward_margin * c.r - 0.5 * spacing;
        if (hull < c.r + 3.0 * spacing)
            throw ConfigError(
                "forward grid too tight: sources on the sphere need margin for the "
                "travel-time solve");
    }
    if (c.grid_n < 2) throw ConfigError("grid.n must be >= 2");
    if (c.grid_margin < 1.0)
        throw ConfigError("grid.margin must be >= 1 so the support ball is covered");
    return out;
}

PhaselessDataset run_synth(const RunConfig& c) {
    const BallGeometry g(c.r0, c.r);
    const std::vector<Vec3> ys = fibonacci_sphere(c.sources, g.r);
    SynthOptions sopt;
    sopt.receivers_per_cap = c.receivers_per_cap;
    sopt.remainder_c = c.remainder_c;
    sopt.noise_sigma = c.noise_sigma;
    sopt.seed = c.seed;
    sopt.unit_amplitude = c.unit_amplitude;
    if (c.model == Model::schrodinger)
        return synth_schrodinger(g, c.phantom, ys, c.ell, c.sweep, sopt);
    const GridSpec forward_grid = centered_grid(c.forward_n, c.forward_margin * c.r);
    return synth_helmholtz(g, c.phantom, c.n1, ys, c.ell, c.sweep, forward_grid, sopt).data;
}

RunReport run_end_to_end(const RunConfig& raw) {
    const ValidatedConfig vc = validate_config(raw);
    const RunConfig& c = vc.config;
    const BallGeometry g(c.r0, c.r);

    RunReport rep;
    rep.warnings = vc.warnings;
    rep.notes = {
        "wavenumber selection rule: k_m = (pi/2 + 2*pi*m)/delta, so that "
        "sin(k_m*delta) = 1 and cos(k_m*delta) = 0",
        "meridian second intersection evaluated on the sphere-consistent branch: "
        "xi2 = 2*ell*r^2*sin(phi)/(r^2 + ell^2*sin^2(phi))",
    };

    std::filesystem::create_directories(c.out_dir);
    auto path_of = [&](const char* name) {
        return (std::filesystem::path(c.out_dir) / name).string();
    };

    // synth
    double t0 = now_ms();
    const GridSpec forward_grid = centered_grid(c.forward_n, c.forward_margin * c.r);
    PhaselessDataset ds = run_synth(c);
    rep.records = ds.records.size();
    write_dataset(ds, path_of("dataset.pds"));
    rep.artifacts["dataset"] = path_of("dataset.pds");
    rep.timings_ms["synth"] = now_ms() - t0;

    // extract
    t0 = now_ms();
    AssembleOptions aopt;
    aopt.count_m = c.count_m;
    const AssembleResult ar = assemble_ray_samples(ds, aopt);
    rep.samples = ar.samples.samples.size();
    rep.failed_records = ar.failed_records;
    rep.duplicates_merged = ar.duplicates_merged;
    rep.negative_warnings = ar.negative_warnings;
    rep.max_spread = ar.max_spread;
    write_samples(ar.samples, path_of("samples.jsonl"));
    rep.artifacts["samples"] = path_of("samples.jsonl");
    rep.timings_ms["extract"] = now_ms() - t0;

    // invert
    t0 = now_ms();
    const GridSpec grid = centered_grid(c.grid_n, c.grid_margin * c.r0);
    const auto mask = ball_mask(grid, c.r0);
    Reconstruction recon;
    SparseRaySystem sys;
    if (c.model == Model::schrodinger) {
        sys = assemble_tomography(ar.samples, grid);
        recon = sirt_solve(sys, mask, c.solver);
    } else {
        sys = assemble_kinematic_linearized(ar.samples, grid);
        if (c.bent_ray == 0) {
            recon = sirt_solve(sys, mask, c.solver);
        } else {
            BentRayOptions bopt;
            bopt.outer_iterations = c.bent_ray;
            bopt.sirt = c.solver;
            bopt.forward_grid = forward_grid;
            bopt.support_radius = c.r0;
            recon = bent_ray_refine(ar.samples, grid, bopt);
        }
    }
    rep.clamped = sys.clamped;
    rep.straight_fallbacks = recon.straight_fallbacks;
    rep.outer_residuals = recon.outer_residuals;
    rep.coverage = ray_coverage(sys, mask, 5);
    write_vxf1(recon.field, path_of("recon.vxf"));
    rep.artifacts["reconstruction"] = path_of("recon.vxf");
    rep.timings_ms["invert"] = now_ms() - t0;

    // evaluate
    t0 = now_ms();
    rep.metrics = evaluate(recon, c.phantom);
    rep.timings_ms["evaluate"] = now_ms() - t0;

    // report
    std::ofstream out(path_of("report.json"));
    out << report_to_json_text(rep) << "\n";
    rep.artifacts["report"] = path_of("report.json");
    return rep;
}

std::string report_to_json_text(const RunReport& rep) {
    json j;
    j["metrics"] = {{"rel_l2", rep.metrics.rel_l2},
                    {"max_err", rep.metrics.max_err},
                    {"residual", rep.metrics.residual}};
    j["coverage"] = rep.coverage;
    j["counters"] = {{"records", rep.records},
                     {"samples", rep.samples},
                     {"clamped", rep.clamped},
                     {"failed_records", rep.failed_records},
                     {"duplicates_merged", rep.duplicates_merged},
                     {"negative_warnings", rep.negative_warnings},
                     {"straight_fallbacks", rep.straight_fallbacks}};
    j["max_spread"] = rep.max_spread;
    j["outer_residuals"] = rep.outer_residuals;
    j["notes"] = rep.notes;
    j["warnings"] = rep.warnings;
    j["artifacts"] = rep.artifacts;
    j["timings_ms"] = rep.timings_ms;
    return j.dump(2);
}

}  // namespace itomo
