#include "doctest.h"

#include "itomo/pipeline.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

using namespace itomo;

namespace {

RunConfig small_schrodinger_config() {
    RunConfig c;
    c.r0 = 1.0;
    c.r = 2.0;
    c.model = Model::schrodinger;
    c.phantom.bumps.push_back({Vec3{0.2, 0, 0}, 0.5, 1.0});
    c.ell_auto = false;
    c.ell = min_ell_schrodinger(BallGeometry(1.0, 2.0)) * 1.05;
    c.sources = 3;
    c.receivers_per_cap = 20;
    c.sweep = KSweep{1000.0, 1400.0, 8};
    c.count_m = 8;
    c.grid_n = 16;
    c.solver.iterations = 40;
    c.seed = 7;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config parsing and round trip") {
    const std::string text = R"({
        "geometry": {"r0": 1.0, "r": 2.0},
        "model": "schrodinger",
        "phantom": {"baseline": 0, "bumps": [{"center": [0.2,0,0], "radius": 0.5, "amplitude": 1.0}]},
        "sweep": {"k0": 1000, "k_max": 1400, "count": 8},
        "sources": 4
    })";
    const RunConfig c = config_from_json_text(text);
    CHECK(c.r0 == 1.0);
    CHECK(c.sources == 4);
    CHECK(c.ell_auto);
    CHECK(c.phantom.bumps.size() == 1);
    CHECK(c.solver.iterations == 200);  // default

    // round trip through the canonical JSON form
    const RunConfig c2 = config_from_json_text(config_to_json_text(c));
    CHECK(c2.sources == c.sources);
    CHECK(c2.sweep.k_max == c.sweep.k_max);

    CHECK_THROWS_AS(config_from_json_text("{not json"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"geometry":{"r0":1,"r":2},"model":"x"})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json_text(
                        R"({"geometry":{"r0":1,"r":2},"model":"schrodinger"})"),
                    ConfigError);  // no phantom
    CHECK_THROWS_AS(load_config_file("missing_config.json"), ConfigError);
}

TEST_CASE("validate_config resolves and rejects") {
    RunConfig c = small_schrodinger_config();

    // auto ell lands above both thresholds and is reported
    c.ell_auto = true;
    c.ell = 0.0;
    const ValidatedConfig v = validate_config(c);
    CHECK(v.config.ell > min_ell_schrodinger(BallGeometry(1.0, 2.0)));
    CHECK(v.config.ell >= ell_star(BallGeometry(1.0, 2.0)));
    REQUIRE(!v.warnings.empty());
    CHECK(v.warnings[0].find("ell resolved automatically") != std::string::npos);

    // explicit ell below the potential-model threshold is a hard error
    RunConfig bad = small_schrodinger_config();
    bad.ell_auto = false;
    bad.ell = 2.5;  // above ell_star = 2.31, below r*sqrt(8) = 5.66
    CHECK_THROWS_WITH_AS(validate_config(bad), doctest::Contains("sqrt(8)"), ConfigError);

    // refractive model: Nyquist guard on the sweep
    RunConfig h = small_schrodinger_config();
    h.model = Model::helmholtz;
    h.phantom.baseline = 1.0;
    h.phantom.bumps[0].amplitude = 0.05;
    h.n1 = 1.05;
    h.ell_auto = true;
    h.ell = 0.0;
    h.sweep = KSweep{40.0, 460.0, 64};  // spacing 6.7 >> pi/rho_max
    CHECK_THROWS_WITH_AS(validate_config(h), doctest::Contains("Nyquist"), ConfigError);
    h.sweep = KSweep{40.0, 460.0, 4096};
    CHECK_NOTHROW(validate_config(h));

    // phantom exceeding the stated bound n1
    h.phantom.bumps[0].amplitude = 0.2;
    CHECK_THROWS_WITH_AS(validate_config(h), doctest::Contains("n1"), ConfigError);

    // baseline conventions per model
    RunConfig wrongbase = small_schrodinger_config();
    wrongbase.phantom.baseline = 1.0;
    CHECK_THROWS_AS(validate_config(wrongbase), ConfigError);
}

TEST_CASE("end-to-end on a zero potential reconstructs zero") {
    RunConfig c = small_schrodinger_config();
    c.phantom.bumps.clear();
    c.out_dir = "pipe_zero_run";
    const RunReport rep = run_end_to_end(c);
    CHECK(rep.metrics.rel_l2 < 1e-6);  // absolute norm for the zero phantom
    CHECK(rep.failed_records == 0);
    CHECK(rep.notes.size() == 2);
    CHECK(std::filesystem::exists(rep.artifacts.at("dataset")));
    CHECK(std::filesystem::exists(rep.artifacts.at("samples")));
    CHECK(std::filesystem::exists(rep.artifacts.at("reconstruction")));
    CHECK(std::filesystem::exists(rep.artifacts.at("report")));
    std::filesystem::remove_all(c.out_dir);
}

TEST_CASE("end-to-end determinism: identical config and seed, identical bytes") {
    RunConfig c = small_schrodinger_config();
    c.noise_sigma = 0.01;  // exercise the seeded noise stream
    c.out_dir = "pipe_det_a";
    const RunReport ra = run_end_to_end(c);
    c.out_dir = "pipe_det_b";
    const RunReport rb = run_end_to_end(c);

    CHECK(slurp(ra.artifacts.at("dataset")) == slurp(rb.artifacts.at("dataset")));
    CHECK(slurp(ra.artifacts.at("samples")) == slurp(rb.artifacts.at("samples")));
    CHECK(slurp(ra.artifacts.at("reconstruction")) == slurp(rb.artifacts.at("reconstruction")));

    auto ja = nlohmann::json::parse(slurp(ra.artifacts.at("report")));
    auto jb = nlohmann::json::parse(slurp(rb.artifacts.at("report")));
    ja.erase("timings_ms");
    jb.erase("timings_ms");
    ja.erase("artifacts");
    jb.erase("artifacts");
    CHECK(ja == jb);

    // a different seed changes the noisy data
    c.seed = 8;
    c.out_dir = "pipe_det_c";
    const RunReport rc = run_end_to_end(c);
    CHECK(slurp(ra.artifacts.at("dataset")) != slurp(rc.artifacts.at("dataset")));

    std::filesystem::remove_all("pipe_det_a");
    std::filesystem::remove_all("pipe_det_b");
    std::filesystem::remove_all("pipe_det_c");
}

TEST_CASE("end-to-end with a real bump recovers a sane field") {
    RunConfig c = small_schrodinger_config();
    c.sources = 6;
    c.receivers_per_cap = 60;
    c.grid_n = 20;
    c.solver.iterations = 120;
    c.out_dir = "pipe_bump_run";
    const RunReport rep = run_end_to_end(c);
    // desk-scale smoke run: few rays, coarse grid; the acceptance suite runs
    // the full-size experiment
    CHECK(rep.metrics.rel_l2 < 0.9);
    CHECK(rep.coverage >= 0.0);
    CHECK(rep.coverage <= 1.0);
    CHECK(rep.failed_records == 0);
    CHECK(rep.samples > 0);
    CHECK(rep.duplicates_merged > 0);
    std::filesystem::remove_all(c.out_dir);
}
