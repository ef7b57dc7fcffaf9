#pragma once

#include "itomo/extraction.hpp"
#include "itomo/forward.hpp"
#include "itomo/inversion.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace itomo {

// Configuration problems (schema, thresholds, missing files) are reported as
// ConfigError; runtime stage failures surface as other exceptions.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    double r0 = 1.0;
    double r = 2.0;
    Model model = Model::schrodinger;
    BumpSum phantom;
    double n1 = 1.0;
    bool ell_auto = true;
    double ell = 0.0;  // resolved value when ell_auto, explicit otherwise
    std::size_t sources = 64;
    std::size_t receivers_per_cap = 200;
    KSweep sweep{1000.0, 1500.0, 8};
    std::size_t count_m = 8;
    std::uint32_t grid_n = 48;      // reconstruction grid nodes per axis
    double grid_margin = 1.25;      // box half-extent = margin * r0
    std::uint32_t forward_n = 81;   // travel-time grid nodes per axis
    double forward_margin = 1.25;   // box half-extent = margin * r
    SirtOptions solver;
    std::size_t bent_ray = 0;  // outer refinement iterations (kinematic only)
    double remainder_c = 0.0;
    double noise_sigma = 0.0;
    bool unit_amplitude = false;
};

RunConfig config_from_json_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string config_to_json_text(const RunConfig& cfg);

struct ValidatedConfig {
    RunConfig config;  // defaults filled, ell resolved
    std::vector<std::string> warnings;
};

// Fills defaults, resolves the automatic auxiliary distance to
// max(coverage threshold, model threshold), and hard-rejects configurations
// violating the admissibility or sampling conditions.
ValidatedConfig validate_config(const RunConfig& raw);

struct RunReport {
    EvalMetrics metrics;
    double coverage = 0.0;
    std::size_t samples = 0;
    std::size_t records = 0;
    std::size_t clamped = 0;
    std::size_t failed_records = 0;
    std::size_t duplicates_merged = 0;
    std::size_t negative_warnings = 0;
    std::size_t straight_fallbacks = 0;
    double max_spread = 0.0;
    std::vector<double> outer_residuals;
    std::vector<std::string> notes;     // fixed formula-reading notes, once per run
    std::vector<std::string> warnings;  // from validation
    std::map<std::string, std::string> artifacts;
    std::map<std::string, double> timings_ms;
};

// Synthesis stage on an already-validated config (model dispatch, source
// lattice, synthesis options).
PhaselessDataset run_synth(const RunConfig& validated);

// synth -> extract -> invert -> evaluate; writes dataset, samples,
// reconstruction grid and the JSON report into out_dir.
RunReport run_end_to_end(const RunConfig& cfg);

std::string report_to_json_text(const RunReport& rep);

}  // namespace itomo
