#pragma once

#include "itomo/forward.hpp"
#include "itomo/geometry.hpp"
#include "itomo/vec3.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace itomo {

// Wavenumbers k_m = (pi/2 + 2*pi*m)/delta with delta = |x-z| - |x-y|: at these
// the interference cosine vanishes and the sine equals one, isolating the
// scattering correction.
struct KmSequence {
    double delta = 0.0;
    std::vector<double> members;
};

// The `count` smallest members >= k0 (m integer >= 0).  Requires delta > 0,
// which the auxiliary-distance condition ell > r*sqrt(8) guarantees.
KmSequence km_sequence(const Vec3& x, const Vec3& y, const Vec3& z, double k0,
                       std::size_t count);

// Evaluates G(k_m) = 4*pi*|x-y| * [f_m - A0(x,y)^2 - A0(x,z)^2] * k_m / A0(x,z)
// at the first count_m members and returns the limit of the least-squares fit
// G = g + c/k; g estimates the line integral of q along [x,y].
double extract_line_integral(std::span<const double> f, std::span<const double> km,
                             const Vec3& x, const Vec3& y, const Vec3& z, std::size_t count_m);

struct RhoOptions {
    double rho_min = 0.0;          // positivity lower bound; estimate must exceed it
    double rho_max = 0.0;          // Nyquist bound (0 disables the sweep check)
    double peak_ratio_min = 10.0;  // dominant peak vs median spectrum magnitude
    std::size_t zero_pad = 8;
};

// Period of the oscillatory part of f over the sweep: subtract the mean, apply
// a Hann window, zero-pad, take the magnitude spectrum in k, refine the
// dominant bin by parabolic interpolation of the log magnitude.
double extract_rho(std::span<const double> f, const KSweep& sweep, const RhoOptions& opt = {});

// tau(x,y) = |x-z| - rho, using that the auxiliary source z lies in the
// homogeneous region so its travel time is the euclidean distance.
double tau_from_rho(const Vec3& x, const Vec3& z, double rho);

enum class SampleKind { line_integral, travel_time };

struct RaySample {
    Vec3 x;
    Vec3 y;
    double value = 0.0;
    double spread = 0.0;  // max-min over auxiliary indices seeing the same receiver
    std::uint8_t j = 0;   // first contributing auxiliary index; 0 = a-priori value
};

struct RaySampleSet {
    SampleKind kind = SampleKind::line_integral;
    std::vector<RaySample> samples;
};

struct AssembleOptions {
    std::size_t count_m = 8;             // fit members per record (potential model)
    double max_failure_fraction = 0.05;  // abort above this
    double negative_tol = 1e-6;          // warning threshold for negative line integrals
};

struct AssembleResult {
    RaySampleSet samples;
    std::size_t failed_records = 0;
    std::size_t negative_warnings = 0;
    std::size_t duplicates_merged = 0;
    double max_spread = 0.0;
    std::vector<std::string> errors;  // first few failure messages
};

// Runs the appropriate extractor per record and deduplicates receivers seen
// from several auxiliary sources (mean value, spread recorded).  For the
// refractive model, receivers outside the shadow set get the a-priori value
// tau = |x-y| instead of an extraction.  Individual record failures are
// collected; more than max_failure_fraction aborts.
AssembleResult assemble_ray_samples(const PhaselessDataset& ds, const AssembleOptions& opt = {});

// JSONL: one sample per line {"x":[..],"y":[..],"j":n,"kind":"..","value":v,"spread":s}.
void write_samples(const RaySampleSet& s, const std::string& path);
RaySampleSet read_samples(const std::string& path);

}  // namespace itomo
