#include "itomo/extraction.hpp"

#include "json.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

namespace itomo {

using std::numbers::pi;

KmSequence km_sequence(const Vec3& x, const Vec3& y, const Vec3& z, double k0,
                       std::size_t count) {
    if (count < 1) throw std::invalid_argument("km_sequence: count must be >= 1");
    const double delta = dist(x, z) - dist(x, y);
    if (!(delta > 0.0))
        throw std::invalid_argument(
            "km_sequence: |x-z| - |x-y| <= 0; requires the condition ell > r*sqrt(8)");
    KmSequence seq;
    seq.delta = delta;
    // smallest integer m with (pi/2 + 2*pi*m)/delta >= k0
    double m0 = std::ceil((k0 * delta - pi / 2.0) / (2.0 * pi));
    if (m0 < 0.0) m0 = 0.0;
    seq.members.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        seq.members.push_back((pi / 2.0 + 2.0 * pi * (m0 + static_cast<double>(i))) / delta);
    return seq;
}

double extract_line_integral(std::span<const double> f, std::span<const double> km,
                             const Vec3& x, const Vec3& y, const Vec3& z,
                             std::size_t count_m) {
    if (count_m < 2) throw std::invalid_argument("extract_line_integral: count_m must be >= 2");
    if (f.size() < count_m || km.size() < count_m)
        throw std::invalid_argument("extract_line_integral: fewer samples than count_m");
    const double ry = dist(x, y);
    const double rz = dist(x, z);
    const double ay = 1.0 / (4.0 * pi * ry);
    const double az = 1.0 / (4.0 * pi * rz);

    // least squares for G(k) = g + c/k
    double s11 = 0.0, s1u = 0.0, suu = 0.0, s1g = 0.0, sug = 0.0;
    for (std::size_t i = 0; i < count_m; ++i) {
        const double k = km[i];
        const double G = 4.0 * pi * ry * (f[i] - ay * ay - az * az) * k / az;
        const double u = 1.0 / k;
        s11 += 1.0;
        s1u += u;
        suu += u * u;
        s1g += G;
        sug += u * G;
    }
    const double det = s11 * suu - s1u * s1u;
    if (std::abs(det) < 1e-30)
        throw std::runtime_error("extract_line_integral: degenerate fit (k values coincide)");
    return (s1g * suu - sug * s1u) / det;
}

namespace {

// |DFT| of the windowed sequence, zero-padded to a power of two
std::vector<double> magnitude_spectrum(std::span<const double> data, std::size_t zero_pad) {
    const std::size_t n = data.size();
    std::size_t padded = 1;
    while (padded < n * std::max<std::size_t>(zero_pad, 1)) padded <<= 1;

    std::vector<double> in(padded, 0.0);
    double mean = 0.0;
    for (double v : data) mean += v;
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double w =
            0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n - 1)));
        in[i] = (data[i] - mean) * w;
    }

    std::vector<fftw_complex> out(padded / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(padded), in.data(), out.data(),
                                          FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    std::vector<double> mag(padded / 2 + 1);
    for (std::size_t i = 0; i < mag.size(); ++i)
        mag[i] = std::hypot(out[i][0], out[i][1]);
    return mag;
}

}  // namespace

double extract_rho(std::span<const double> f, const KSweep& sweep, const RhoOptions& opt) {
    sweep.validate();
    if (f.size() != sweep.count)
        throw std::invalid_argument("extract_rho: sample count does not match the sweep");
    if (opt.rho_max > 0.0 && !(sweep.spacing() < pi / opt.rho_max))
        throw std::invalid_argument(
            "extract_rho: sweep spacing violates the Nyquist bound pi/rho_max");

    const auto mag = magnitude_spectrum(f, opt.zero_pad);
    const std::size_t padded = 2 * (mag.size() - 1);
    // bin b corresponds to rho = 2*pi*b/(padded*dk)
    const double bin_to_rho = 2.0 * pi / (static_cast<double>(padded) * sweep.spacing());

    // search the admissible band only; always skip the DC bin
    std::size_t lo = 1, hi = mag.size() - 1;
    if (opt.rho_min > 0.0)
        lo = std::max<std::size_t>(lo, static_cast<std::size_t>(opt.rho_min / bin_to_rho));
    if (opt.rho_max > 0.0)
        hi = std::min<std::size_t>(
            hi, static_cast<std::size_t>(std::ceil(opt.rho_max / bin_to_rho)) + 1);
    if (lo + 2 > hi) throw std::invalid_argument("extract_rho: empty search band");

    std::size_t peak = lo;
    for (std::size_t b = lo; b <= hi; ++b)
        if (mag[b] > mag[peak]) peak = b;

    std::vector<double> band(mag.begin() + static_cast<std::ptrdiff_t>(lo),
                             mag.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    std::nth_element(band.begin(), band.begin() + static_cast<std::ptrdiff_t>(band.size() / 2),
                     band.end());
    const double med = band[band.size() / 2];
    if (!(mag[peak] > opt.peak_ratio_min * std::max(med, 1e-300)))
        throw std::runtime_error("extract_rho: no dominant spectral peak");

    double refined = static_cast<double>(peak);
    if (peak > 0 && peak + 1 < mag.size() && mag[peak - 1] > 0.0 && mag[peak + 1] > 0.0) {
        const double lm = std::log(mag[peak - 1]);
        const double l0 = std::log(mag[peak]);
        const double lp = std::log(mag[peak + 1]);
        const double denom = lm - 2.0 * l0 + lp;
        if (denom < 0.0) refined += 0.5 * (lm - lp) / denom;
    }
    const double rho = refined * bin_to_rho;
    if (opt.rho_min > 0.0 && rho < opt.rho_min)
        throw std::runtime_error("extract_rho: estimate below the positivity bound");
    return rho;
}

double tau_from_rho(const Vec3& x, const Vec3& z, double rho) {
    const double rz = dist(x, z);
    if (!(rho < rz))
        throw std::invalid_argument("tau_from_rho: rho >= |x-z| would give tau <= 0");
    return rz - rho;
}

AssembleResult assemble_ray_samples(const PhaselessDataset& ds, const AssembleOptions& opt) {
    if (ds.records.empty()) throw std::invalid_argument("assemble: empty dataset");
    AssembleResult res;
    res.samples.kind =
        ds.model == Model::schrodinger ? SampleKind::line_integral : SampleKind::travel_time;

    const double bound =
        ds.model == Model::helmholtz
            ? std::sqrt(ds.ell * ds.ell + ds.geometry.r * ds.geometry.r) - ds.geometry.r -
                  2.0 * ds.geometry.r * ds.n1
            : 0.0;

    struct Agg {
        double sum = 0.0, lo = 0.0, hi = 0.0;
        std::size_t n = 0;
        std::uint8_t j = 0;
        Vec3 x, y;
    };
    std::map<std::pair<std::uint32_t, std::uint32_t>, Agg> bins;

    for (const DataRecord& rec : ds.records) {
        const Vec3& y = ds.sources.at(rec.y_index);
        const Vec3& z = ds.triads.at(rec.y_index).z.at(rec.j - 1);
        const auto key = std::make_pair(rec.y_index, rec.x_index);

        double value = 0.0;
        bool a_priori = false;
        try {
            if (ds.model == Model::schrodinger) {
                const KmSequence km =
                    km_sequence(rec.x, y, z, ds.sweep.k0, ds.sweep.count);
                value = extract_line_integral(rec.f, km.members, rec.x, y, z,
                                              std::min(opt.count_m, ds.sweep.count));
                if (value < -opt.negative_tol) ++res.negative_warnings;
            } else {
                if (!is_shadowed(rec.x, y, ds.geometry)) {
                    // the straight ray misses the opaque ball: travel time is known
                    value = dist(rec.x, y);
                    a_priori = true;
                } else {
                    RhoOptions ropt;
                    ropt.rho_min = bound;
                    ropt.rho_max = dist(rec.x, z);
                    const double rho = extract_rho(rec.f, ds.sweep, ropt);
                    value = tau_from_rho(rec.x, z, rho);
                }
            }
        } catch (const std::exception& e) {
            ++res.failed_records;
            if (res.errors.size() < 8) res.errors.emplace_back(e.what());
            continue;
        }

        auto [it, inserted] = bins.try_emplace(key);
        Agg& a = it->second;
        if (inserted) {
            a.x = rec.x;
            a.y = y;
            a.j = a_priori ? 0 : rec.j;
            a.lo = a.hi = value;
        } else {
            ++res.duplicates_merged;
            a.lo = std::min(a.lo, value);
            a.hi = std::max(a.hi, value);
        }
        a.sum += value;
        a.n += 1;
    }

    if (static_cast<double>(res.failed_records) >
        opt.max_failure_fraction * static_cast<double>(ds.records.size()))
        throw std::runtime_error("assemble: more than the tolerated fraction of records failed");

    for (const auto& [key, a] : bins) {
        RaySample s;
        s.x = a.x;
        s.y = a.y;
        s.value = a.sum / static_cast<double>(a.n);
        s.spread = a.hi - a.lo;
        s.j = a.j;
        res.samples.samples.push_back(s);
        res.max_spread = std::max(res.max_spread, s.spread);
    }
    return res;
}

void write_samples(const RaySampleSet& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write samples file: " + path);
    const char* kind = s.kind == SampleKind::line_integral ? "line_integral" : "travel_time";
    for (const RaySample& r : s.samples) {
        nlohmann::json j;
        j["x"] = {r.x.x, r.x.y, r.x.z};
        j["y"] = {r.y.x, r.y.y, r.y.z};
        j["j"] = r.j;
        j["kind"] = kind;
        j["value"] = r.value;
        j["spread"] = r.spread;
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("short write on samples file: " + path);
}

RaySampleSet read_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open samples file: " + path);
    RaySampleSet set;
    bool kind_set = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        RaySample r;
        r.x = Vec3{j.at("x").at(0), j.at("x").at(1), j.at("x").at(2)};
        r.y = Vec3{j.at("y").at(0), j.at("y").at(1), j.at("y").at(2)};
        r.j = j.at("j").get<std::uint8_t>();
        r.value = j.at("value").get<double>();
        r.spread = j.at("spread").get<double>();
        const SampleKind k = j.at("kind").get<std::string>() == "line_integral"
                                 ? SampleKind::line_integral
                                 : SampleKind::travel_time;
        if (!kind_set) {
            set.kind = k;
            kind_set = true;
        } else if (k != set.kind) {
            throw std::runtime_error("samples file mixes sample kinds");
        }
        set.samples.push_back(r);
    }
    return set;
}

}  // namespace itomo
