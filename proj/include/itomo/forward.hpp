#pragma once

#include "itomo/eikonal.hpp"
#include "itomo/geometry.hpp"
#include "itomo/phantom.hpp"
#include "itomo/vec3.hpp"
#include "itomo/voxel.hpp"

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace itomo {

enum class Model { schrodinger, helmholtz };

// Wavenumber window.  For the refractive model the data are tabulated on the
// uniform grid at(0..count-1); for the potential model each record carries its
// own quarter-period wavenumber sequence and the window only bounds it.
struct KSweep {
    double k0 = 0.0;
    double k_max = 0.0;
    std::size_t count = 0;

    void validate() const;
    double at(std::size_t i) const {
        return k0 + (k_max - k0) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    double spacing() const { return (k_max - k0) / static_cast<double>(count - 1); }
};

struct DataRecord {
    std::uint32_t y_index = 0;
    std::uint8_t j = 0;         // auxiliary index 1..3
    std::uint32_t x_index = 0;  // index into the shared receiver lattice
    Vec3 x;
    std::vector<double> f;  // squared modulus per wavenumber sample
};

struct PhaselessDataset {
    BallGeometry geometry;
    Model model = Model::schrodinger;
    double ell = 0.0;
    double n1 = 1.0;
    bool unit_amplitude = false;
    KSweep sweep;
    std::vector<Vec3> sources;
    std::vector<SourceTriad> triads;
    std::vector<DataRecord> records;

    explicit PhaselessDataset(const BallGeometry& g) : geometry(g) {}
};

// Free-space wave from a point source: e^{ik|x-y|}/(4*pi*|x-y|).
std::complex<double> v0(const Vec3& x, const Vec3& y, double k);

// Leading-order scattering correction for the potential model:
// i*e^{ik|x-y|}/(8*pi*|x-y|*k) * integral of q along the segment [x,y].
std::complex<double> vsc_leading(const BumpSum& q, const Vec3& x, const Vec3& y, double k,
                                 double quad_tol = 1e-10);

// Interference field of the two sources: [v0 + vsc](x,y) + [v0 + vsc](x,z).
std::complex<double> field_schrodinger(const BumpSum& q, const Vec3& x, const Vec3& y,
                                       const Vec3& z, double k, double quad_tol = 1e-10);

// Model amplitude for the refractive field: 1/(4*pi*tau(x,y)); reduces to the
// free-space amplitude when n == 1.
double amplitude_helmholtz(const TauField& t, const Vec3& x);

struct SynthOptions {
    std::size_t receivers_per_cap = 200;
    double remainder_c = 0.0;   // additive c/k^2 model-remainder injector
    double noise_sigma = 0.0;   // multiplicative gaussian noise (1 + sigma*xi)
    std::uint64_t seed = 0;     // noise stream
    double quad_tol = 1e-10;
    bool unit_amplitude = false;  // replace both amplitudes by 1 (refractive model)
};

PhaselessDataset synth_schrodinger(const BallGeometry& g, const BumpSum& q,
                                   std::span<const Vec3> y_list, double ell, const KSweep& sweep,
                                   const SynthOptions& opt = {});

struct HelmholtzSynth {
    PhaselessDataset data;
    std::vector<TauField> tau;  // one field per source, reusable by callers
};

HelmholtzSynth synth_helmholtz(const BallGeometry& g, const BumpSum& n_phantom, double n1,
                               std::span<const Vec3> y_list, double ell, const KSweep& sweep,
                               const GridSpec& forward_grid, const SynthOptions& opt = {});

// Shared receiver lattice: the smallest deterministic lattice giving at least
// `per_cap` illuminated receivers in every cap of every triad.
std::vector<Vec3> receiver_lattice(const BallGeometry& g, double ell, std::size_t per_cap);

// Dataset container: magic "PDS1", u64 JSON header length, JSON header, then
// records.size()*sweep.count little-endian f64 values, record-major k-fastest.
void write_dataset(const PhaselessDataset& ds, const std::string& path);
PhaselessDataset read_dataset(const std::string& path);

}  // namespace itomo
