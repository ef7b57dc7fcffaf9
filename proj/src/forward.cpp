#include "itomo/forward.hpp"

#include "itomo/extraction.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace itomo {

using std::numbers::pi;

void KSweep::validate() const {
    if (!(k0 > 0.0)) throw std::invalid_argument("KSweep: k0 must be > 0");
    if (!(k_max > k0)) throw std::invalid_argument("KSweep: k_max must exceed k0");
    if (count < 2) throw std::invalid_argument("KSweep: count must be >= 2");
}

std::complex<double> v0(const Vec3& x, const Vec3& y, double k) {
    const double r = dist(x, y);
    if (r == 0.0) throw std::invalid_argument("v0: coincident source and receiver");
    return std::polar(1.0 / (4.0 * pi * r), k * r);
}

std::complex<double> vsc_leading(const BumpSum& q, const Vec3& x, const Vec3& y, double k,
                                 double quad_tol) {
    const double r = dist(x, y);
    if (r == 0.0) throw std::invalid_argument("vsc_leading: coincident source and receiver");
    if (!(k > 0.0)) throw std::invalid_argument("vsc_leading: k must be > 0");
    const double integral = line_integral_oracle(q, {x, y}, quad_tol);
    return std::complex<double>(0.0, 1.0) * std::polar(integral / (8.0 * pi * r * k), k * r);
}

std::complex<double> field_schrodinger(const BumpSum& q, const Vec3& x, const Vec3& y,
                                       const Vec3& z, double k, double quad_tol) {
    return v0(x, y, k) + vsc_leading(q, x, y, k, quad_tol) + v0(x, z, k) +
           vsc_leading(q, x, z, k, quad_tol);
}

double amplitude_helmholtz(const TauField& t, const Vec3& x) {
    const double tau = t.at(x);
    if (!(tau > 0.0)) throw std::invalid_argument("amplitude_helmholtz: tau must be > 0");
    return 1.0 / (4.0 * pi * tau);
}

std::vector<Vec3> receiver_lattice(const BallGeometry& g, double ell, std::size_t per_cap) {
    if (per_cap == 0) throw std::invalid_argument("receiver_lattice: per_cap must be >= 1");
    // every cap is congruent: the auxiliary sources sit at |z| = sqrt(r^2+ell^2)
    // and illuminate the fraction (1 - r/|z|)/2 of the sphere
    const double zdist = std::hypot(g.r, ell);
    const double frac = 0.5 * (1.0 - g.r / zdist);
    auto n = static_cast<std::size_t>(std::ceil(static_cast<double>(per_cap) / frac * 1.3));
    n = std::max<std::size_t>(n, 64);

    const Vec3 y{0.0, 0.0, -g.r};
    const SourceTriad probe = make_triad(g, y, ell);
    for (;;) {
        const auto pts = fibonacci_sphere(n, g.r);
        std::size_t worst = per_cap;
        for (const Vec3& z : probe.z) {
            std::size_t cnt = 0;
            for (const Vec3& p : pts)
                if (is_illuminated(p, z)) ++cnt;
            worst = std::min(worst, cnt);
        }
        if (worst >= per_cap) return pts;
        n *= 2;
    }
}

namespace {

void check_ell(const BallGeometry& g, double ell, Model model, double n1) {
    const double ls = ell_star(g);
    if (ell < ls * (1.0 - 1e-12))
        throw std::invalid_argument(
            "ell below the triad coverage threshold 2*r0*r/sqrt(r^2-r0^2)");
    if (model == Model::schrodinger) {
        if (ell <= min_ell_schrodinger(g))
            throw std::invalid_argument(
                "ell must exceed r*sqrt(8) for the potential model data reduction");
    } else {
        if (ell <= min_ell_helmholtz(g, n1))
            throw std::invalid_argument(
                "ell must exceed r*sqrt((1+2*n1)^2-1) for the refractive model data reduction");
    }
}

struct NoiseStream {
    std::mt19937_64 rng;
    std::normal_distribution<double> gauss;
    double sigma;
    explicit NoiseStream(std::uint64_t seed, double sigma_)
        : rng(splitmix64(seed ^ 0x9d2c5680u)), sigma(sigma_) {}
    double apply(double f) {
        if (sigma <= 0.0) return f;
        return std::max(0.0, f * (1.0 + sigma * gauss(rng)));
    }
};

}  // namespace

PhaselessDataset synth_schrodinger(const BallGeometry& g, const BumpSum& q,
                                   std::span<const Vec3> y_list, double ell, const KSweep& sweep,
                                   const SynthOptions& opt) {
    sweep.validate();
    check_ell(g, ell, Model::schrodinger, 1.0);
    validate_phantom(q, g);

    PhaselessDataset ds(g);
    ds.model = Model::schrodinger;
    ds.ell = ell;
    ds.sweep = sweep;
    ds.sources.assign(y_list.begin(), y_list.end());

    const auto lattice = receiver_lattice(g, ell, opt.receivers_per_cap);
    NoiseStream noise(opt.seed, opt.noise_sigma);

    for (std::uint32_t yi = 0; yi < ds.sources.size(); ++yi) {
        const Vec3& y = ds.sources[yi];
        const SourceTriad triad = make_triad(g, y, ell);
        ds.triads.push_back(triad);
        for (std::uint8_t j = 1; j <= 3; ++j) {
            const Vec3& z = triad.z[j - 1];
            std::size_t taken = 0;
            for (std::uint32_t xi = 0; xi < lattice.size() && taken < opt.receivers_per_cap;
                 ++xi) {
                const Vec3& x = lattice[xi];
                if (!is_illuminated(x, z)) continue;
                ++taken;

                const double ry = dist(x, y);
                const double rz = dist(x, z);
                const double delta = rz - ry;
                if (!(delta > 0.0))
                    throw std::logic_error(
                        "synth: |x-z| - |x-y| <= 0 despite ell > r*sqrt(8)");

                const double ay = 1.0 / (4.0 * pi * ry);
                const double az = 1.0 / (4.0 * pi * rz);
                const double integral = line_integral_oracle(q, {x, y}, opt.quad_tol);
                // the segment from an illuminated receiver to the auxiliary
                // source stays outside the inner ball: its correction is zero
                const double integral_z = line_integral_oracle(q, {x, z}, opt.quad_tol);
                if (integral_z != 0.0)
                    throw std::logic_error("synth: auxiliary-source ray meets the support");
                const double b = integral / (8.0 * pi * ry);

                DataRecord rec;
                rec.y_index = yi;
                rec.j = j;
                rec.x_index = xi;
                rec.x = x;
                const KmSequence km = km_sequence(x, y, z, sweep.k0, sweep.count);
                if (km.members.back() > sweep.k_max)
                    throw std::invalid_argument(
                        "synth: required k_m exceeds the sweep window k_max");
                rec.f.reserve(sweep.count);
                for (double k : km.members) {
                    // |(ay + i b/k) e^{ik ry} + az e^{ik rz}|^2
                    double f = ay * ay + b * b / (k * k) + az * az +
                               2.0 * az * (ay * std::cos(k * delta) +
                                           b / k * std::sin(k * delta));
                    if (opt.remainder_c != 0.0) f += opt.remainder_c / (k * k);
                    rec.f.push_back(noise.apply(f));
                }
                ds.records.push_back(std::move(rec));
            }
            if (taken < opt.receivers_per_cap)
                throw std::logic_error("synth: receiver lattice too small for the cap");
        }
    }
    return ds;
}

HelmholtzSynth synth_helmholtz(const BallGeometry& g, const BumpSum& n_phantom, double n1,
                               std::span<const Vec3> y_list, double ell, const KSweep& sweep,
                               const GridSpec& forward_grid, const SynthOptions& opt) {
    sweep.validate();
    if (n1 < 1.0) throw std::invalid_argument("synth: n1 must be >= 1");
    check_ell(g, ell, Model::helmholtz, n1);
    validate_phantom(n_phantom, g);
    if (n_phantom.baseline != 1.0)
        throw std::invalid_argument("synth: refractive phantom must have baseline 1");

    // Nyquist for the period extraction downstream: the largest recoverable
    // period is bounded by max |x-z| over receivers
    const double rho_max = std::hypot(g.r, ell) + g.r;
    if (!(sweep.spacing() < pi / rho_max))
        throw std::invalid_argument(
            "synth: sweep spacing violates the Nyquist bound pi/max|x-z|");

    const double bound = std::sqrt(ell * ell + g.r * g.r) - g.r - 2.0 * g.r * n1;

    HelmholtzSynth out{PhaselessDataset(g), {}};
    PhaselessDataset& ds = out.data;
    ds.model = Model::helmholtz;
    ds.ell = ell;
    ds.n1 = n1;
    ds.unit_amplitude = opt.unit_amplitude;
    ds.sweep = sweep;
    ds.sources.assign(y_list.begin(), y_list.end());

    const VoxelField n_field = rasterize(n_phantom, forward_grid);
    const VoxelField ones(forward_grid, 1.0);
    const auto lattice = receiver_lattice(g, ell, opt.receivers_per_cap);
    NoiseStream noise(opt.seed, opt.noise_sigma);

    for (std::uint32_t yi = 0; yi < ds.sources.size(); ++yi) {
        const Vec3& y = ds.sources[yi];
        const SourceTriad triad = make_triad(g, y, ell);
        ds.triads.push_back(triad);
        // Model travel time with the common discretization bias removed:
        // tau = |x-y| + (tau_h(n) - tau_h(1)); exact for n == 1.
        TauField tau = solve_tau(n_field, y);
        {
            const TauField tau_hom = solve_tau(ones, y);
            const GridSpec& fg = forward_grid;
            for (std::uint32_t k = 0; k < fg.dims[2]; ++k)
                for (std::uint32_t j = 0; j < fg.dims[1]; ++j)
                    for (std::uint32_t i = 0; i < fg.dims[0]; ++i) {
                        const std::size_t idx = fg.index(i, j, k);
                        tau.tau.values[idx] += dist(fg.node(i, j, k), y) -
                                               tau_hom.tau.values[idx];
                    }
        }

        for (std::uint8_t j = 1; j <= 3; ++j) {
            const Vec3& z = triad.z[j - 1];
            std::size_t taken = 0;
            for (std::uint32_t xi = 0; xi < lattice.size() && taken < opt.receivers_per_cap;
                 ++xi) {
                const Vec3& x = lattice[xi];
                if (!is_illuminated(x, z)) continue;
                ++taken;

                const double tau_xy = tau.at(x);
                const double rz = dist(x, z);  // z is in the homogeneous region
                const double rho = rz - tau_xy;
                const double slack = std::max(0.02 * tau_xy, 3.0 * forward_grid.spacing);
                if (rho < bound - slack)
                    throw std::logic_error(
                        "synth: phase difference below the positivity bound "
                        "sqrt(ell^2+r^2)-r-2*r*n1");

                const double ay =
                    opt.unit_amplitude ? 1.0 : 1.0 / (4.0 * pi * tau_xy);
                const double az = opt.unit_amplitude ? 1.0 : 1.0 / (4.0 * pi * rz);

                DataRecord rec;
                rec.y_index = yi;
                rec.j = j;
                rec.x_index = xi;
                rec.x = x;
                rec.f.reserve(sweep.count);
                for (std::size_t s = 0; s < sweep.count; ++s) {
                    const double k = sweep.at(s);
                    double f = ay * ay + az * az + 2.0 * ay * az * std::cos(k * rho);
                    if (opt.remainder_c != 0.0) f += opt.remainder_c / (k * k);
                    rec.f.push_back(noise.apply(f));
                }
                ds.records.push_back(std::move(rec));
            }
            if (taken < opt.receivers_per_cap)
                throw std::logic_error("synth: receiver lattice too small for the cap");
        }
        out.tau.push_back(std::move(tau));
    }
    return out;
}

namespace {

nlohmann::json vec_to_json(const Vec3& v) { return {v.x, v.y, v.z}; }

Vec3 vec_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

void write_dataset(const PhaselessDataset& ds, const std::string& path) {
    nlohmann::json h;
    h["geometry"] = {{"r0", ds.geometry.r0}, {"r", ds.geometry.r}};
    h["model"] = ds.model == Model::schrodinger ? "schrodinger" : "helmholtz";
    h["ell"] = ds.ell;
    h["n1"] = ds.n1;
    h["unit_amplitude"] = ds.unit_amplitude;
    h["sweep"] = {{"k0", ds.sweep.k0}, {"k_max", ds.sweep.k_max}, {"count", ds.sweep.count}};
    h["sources"] = nlohmann::json::array();
    for (const Vec3& y : ds.sources) h["sources"].push_back(vec_to_json(y));
    h["triads"] = nlohmann::json::array();
    for (const SourceTriad& t : ds.triads)
        h["triads"].push_back(
            {vec_to_json(t.z[0]), vec_to_json(t.z[1]), vec_to_json(t.z[2])});
    h["records"] = nlohmann::json::array();
    for (const DataRecord& r : ds.records)
        h["records"].push_back(
            {{"y", r.y_index}, {"j", r.j}, {"xi", r.x_index}, {"x", vec_to_json(r.x)}});

    const std::string header = h.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    out.write("PDS1", 4);
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const DataRecord& r : ds.records) {
        if (r.f.size() != ds.sweep.count)
            throw std::logic_error("dataset record has wrong sample count");
        out.write(reinterpret_cast<const char*>(r.f.data()),
                  static_cast<std::streamsize>(r.f.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("short write on dataset file: " + path);
}

PhaselessDataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PDS1", 4) != 0)
        throw std::runtime_error("not a dataset file: " + path);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error("truncated dataset header: " + path);
    const nlohmann::json h = nlohmann::json::parse(header);

    PhaselessDataset ds(BallGeometry(h.at("geometry").at("r0").get<double>(),
                                     h.at("geometry").at("r").get<double>()));
    ds.model = h.at("model").get<std::string>() == "schrodinger" ? Model::schrodinger
                                                                 : Model::helmholtz;
    ds.ell = h.at("ell").get<double>();
    ds.n1 = h.at("n1").get<double>();
    ds.unit_amplitude = h.value("unit_amplitude", false);
    ds.sweep.k0 = h.at("sweep").at("k0").get<double>();
    ds.sweep.k_max = h.at("sweep").at("k_max").get<double>();
    ds.sweep.count = h.at("sweep").at("count").get<std::size_t>();
    ds.sweep.validate();
    for (const auto& jy : h.at("sources")) ds.sources.push_back(vec_from_json(jy));
    for (const auto& jt : h.at("triads")) {
        SourceTriad t;
        t.ell = ds.ell;
        t.z = {vec_from_json(jt.at(0)), vec_from_json(jt.at(1)), vec_from_json(jt.at(2))};
        ds.triads.push_back(t);
    }
    for (std::size_t i = 0; i < ds.triads.size() && i < ds.sources.size(); ++i)
        ds.triads[i].y = ds.sources[i];

    for (const auto& jr : h.at("records")) {
        DataRecord r;
        r.y_index = jr.at("y").get<std::uint32_t>();
        r.j = jr.at("j").get<std::uint8_t>();
        r.x_index = jr.at("xi").get<std::uint32_t>();
        r.x = vec_from_json(jr.at("x"));
        r.f.resize(ds.sweep.count);
        ds.records.push_back(std::move(r));
    }
    for (DataRecord& r : ds.records) {
        in.read(reinterpret_cast<char*>(r.f.data()),
                static_cast<std::streamsize>(r.f.size() * sizeof(double)));
    }
    if (!in) throw std::runtime_error("truncated dataset block: " + path);
    return ds;
}

}  // namespace itomo
