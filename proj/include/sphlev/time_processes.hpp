#pragma once

/// \file time_processes.hpp
/// Stationary Gaussian coefficient paths a_lm(t_k) generated by circulant
/// embedding, and the ensemble container with its binary cache format.

#include "sphlev/covariance_model.hpp"
#include "sphlev/random.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphlev {

struct TimeGrid {
    double dt = 0.25;
    int n_steps = 2;

    double horizon() const { return dt * (n_steps - 1); }
    double time(int k) const { return dt * k; }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw std::domain_error("time grid: dt must be > 0");
        if (n_steps < 2) throw std::domain_error("time grid: n_steps must be >= 2");
    }

    /// Grid of step dt whose horizon is T rounded to the nearest multiple of dt.
    static TimeGrid for_horizon(double T, double dt) {
        if (!(T > 0.0)) throw std::domain_error("time grid: horizon must be > 0");
        TimeGrid g{dt, static_cast<int>(std::llround(T / dt)) + 1};
        g.validate();
        return g;
    }
    bool operator==(const TimeGrid&) const = default;
};

/// Trapezoidal integral of samples on a uniform grid.
inline double trapezoid(std::span<const double> f, double dt) {
    if (f.size() < 2) return 0.0;
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return s * dt;
}

namespace detail {

// FFTW planning is not thread-safe; execution of an existing plan is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline FftwBuffer fftw_buffer(std::size_t n) {
    auto* p = fftw_alloc_complex(n);
    if (!p) throw std::bad_alloc();
    return FftwBuffer(p);
}

struct FftwPlan {
    fftw_plan plan = nullptr;
    FftwPlan() = default;
    FftwPlan(const FftwPlan&) = delete;
    FftwPlan& operator=(const FftwPlan&) = delete;
    ~FftwPlan() {
        if (plan) {
            std::lock_guard lock(fftw_planner_mutex());
            fftw_destroy_plan(plan);
        }
    }
};

}  // namespace detail

/// Exact sampler for a stationary Gaussian sequence X_0..X_{n-1} with
/// Cov(X_i, X_j) = r(|i - j|), via a circulant embedding of size M.
/// Each FFT yields two independent paths (real and imaginary parts).
class StationaryPathGenerator {
public:
    struct Options {
        int oversample = 1;      ///< multiplies the minimal embedding size
        int max_doublings = 4;
        double negative_tol = 1e-8;  ///< relative to the largest eigenvalue
    };

    StationaryPathGenerator(int n, const std::function<double(long)>& acf, Options opt) : n_(n) {
        if (n < 1) throw std::domain_error("path generator: n must be >= 1");
        if (opt.oversample < 1) throw std::domain_error("path generator: oversample must be >= 1");
        std::size_t m = 2;
        while (m < 2 * static_cast<std::size_t>(n > 1 ? n - 1 : 1)) m *= 2;
        m *= std::bit_ceil(static_cast<std::size_t>(opt.oversample));
        for (int attempt = 0;; ++attempt) {
            if (try_embed(m, acf, opt.negative_tol)) break;
            if (attempt >= opt.max_doublings)
                throw std::runtime_error("circulant embedding is not nonnegative-definite after " +
                                         std::to_string(opt.max_doublings) + " doublings (size " +
                                         std::to_string(m) + ", min eigenvalue ratio " +
                                         format_double(min_ratio_) + ")");
            m *= 2;
            ++doublings_;
        }
        auto buf = detail::fftw_buffer(m_);
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan_.plan = fftw_plan_dft_1d(static_cast<int>(m_), buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE);
        if (!plan_.plan) throw std::runtime_error("FFTW planning failed");
    }

    StationaryPathGenerator(int n, const std::function<double(long)>& acf)
        : StationaryPathGenerator(n, acf, Options{}) {}

    int length() const { return n_; }
    std::size_t embedding_size() const { return m_; }
    int doublings() const { return doublings_; }
    /// Eigenvalues in (-tol*max, 0) that were set to zero.
    int clipped_eigenvalues() const { return clipped_; }

    /// Two independent paths of length n. Draws 2M normals from `g`.
    void generate(GaussianStream& g, std::span<double> first, std::span<double> second) const {
        auto buf = detail::fftw_buffer(m_);
        for (std::size_t j = 0; j < m_; ++j) {
            const double a = g();
            const double b = g();
            buf[j][0] = scale_[j] * a;
            buf[j][1] = scale_[j] * b;
        }
        fftw_execute_dft(plan_.plan, buf.get(), buf.get());
        const auto n = static_cast<std::size_t>(n_);
        for (std::size_t k = 0; k < n; ++k) {
            if (k < first.size()) first[k] = buf[k][0];
            if (k < second.size()) second[k] = buf[k][1];
        }
    }

private:
    bool try_embed(std::size_t m, const std::function<double(long)>& acf, double tol) {
        auto buf = detail::fftw_buffer(m);
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t lag = (j <= m / 2) ? j : m - j;
            buf[j][0] = acf(static_cast<long>(lag));
            buf[j][1] = 0.0;
        }
        {
            std::lock_guard lock(detail::fftw_planner_mutex());
            fftw_plan p = fftw_plan_dft_1d(static_cast<int>(m), buf.get(), buf.get(), FFTW_FORWARD, FFTW_ESTIMATE);
            fftw_execute(p);
            fftw_destroy_plan(p);
        }
        double mx = 0.0, mn = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            mx = std::max(mx, buf[j][0]);
            mn = std::min(mn, buf[j][0]);
        }
        min_ratio_ = mx > 0.0 ? mn / mx : 0.0;
        if (mn < -tol * mx) return false;
        m_ = m;
        scale_.assign(m, 0.0);
        clipped_ = 0;
        for (std::size_t j = 0; j < m; ++j) {
            double lam = buf[j][0];
            if (lam < 0.0) {
                lam = 0.0;
                ++clipped_;
            }
            scale_[j] = std::sqrt(lam / static_cast<double>(m));
        }
        return true;
    }

    int n_;
    std::size_t m_ = 0;
    int doublings_ = 0;
    int clipped_ = 0;
    double min_ratio_ = 0.0;
    std::vector<double> scale_;
    detail::FftwPlan plan_;
};

/// One (l, m) pair of the real harmonic basis, in storage order.
struct HarmonicIndex {
    int ell;
    int m;
};

/// Harmonics of every spectrum entry, l ascending, m from -l to l.
inline std::vector<HarmonicIndex> harmonic_layout(const PowerSpectrum& s) {
    std::vector<HarmonicIndex> out;
    for (const auto& e : s.entries())
        for (int m = -e.ell; m <= e.ell; ++m) out.push_back({e.ell, m});
    return out;
}

/// Sampled coefficient paths. Storage is slice-major: coeff(k, h) at k * nh + h.
class CoefficientEnsemble {
public:
    CoefficientEnsemble(std::shared_ptr<const PowerSpectrum> s, TimeGrid grid, std::uint64_t seed)
        : spectrum_(std::move(s)), grid_(grid), seed_(seed), layout_(harmonic_layout(*spectrum_)) {
        grid_.validate();
        data_.assign(static_cast<std::size_t>(grid_.n_steps) * layout_.size(), 0.0);
        std::size_t off = 0;
        for (const auto& e : spectrum_->entries()) {
            offsets_.push_back(off);
            off += static_cast<std::size_t>(2 * e.ell + 1);
        }
    }

    const PowerSpectrum& spectrum() const { return *spectrum_; }
    std::shared_ptr<const PowerSpectrum> spectrum_ptr() const { return spectrum_; }
    const TimeGrid& grid() const { return grid_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<HarmonicIndex>& layout() const { return layout_; }
    std::size_t harmonic_count() const { return layout_.size(); }
    int steps() const { return grid_.n_steps; }

    /// Storage index of (ell, m); throws if ell is not in the spectrum.
    std::size_t harmonic_index(int ell, int m) const {
        const auto& es = spectrum_->entries();
        for (std::size_t i = 0; i < es.size(); ++i)
            if (es[i].ell == ell) {
                if (m < -ell || m > ell) throw std::domain_error("harmonic_index: |m| > l");
                return offsets_[i] + static_cast<std::size_t>(m + ell);
            }
        throw std::invalid_argument("harmonic_index: multipole l=" + std::to_string(ell) + " not in spectrum");
    }

    double coeff(int k, std::size_t h) const { return data_[static_cast<std::size_t>(k) * layout_.size() + h]; }
    double& coeff(int k, std::size_t h) { return data_[static_cast<std::size_t>(k) * layout_.size() + h]; }
    double coeff(int k, int ell, int m) const { return coeff(k, harmonic_index(ell, m)); }

    std::span<const double> slice(int k) const {
        return {data_.data() + static_cast<std::size_t>(k) * layout_.size(), layout_.size()};
    }
    std::span<double> slice(int k) {
        return {data_.data() + static_cast<std::size_t>(k) * layout_.size(), layout_.size()};
    }

    std::vector<double> path(std::size_t h) const {
        std::vector<double> p(static_cast<std::size_t>(steps()));
        for (int k = 0; k < steps(); ++k) p[static_cast<std::size_t>(k)] = coeff(k, h);
        return p;
    }

    const std::vector<double>& raw() const { return data_; }
    std::vector<double>& raw() { return data_; }

    int clipped_eigenvalues = 0;  ///< diagnostic from the path generators

private:
    std::shared_ptr<const PowerSpectrum> spectrum_;
    TimeGrid grid_;
    std::uint64_t seed_;
    std::vector<HarmonicIndex> layout_;
    std::vector<std::size_t> offsets_;
    std::vector<double> data_;
};

/// Reusable sampler: builds one circulant generator per multipole for a
/// fixed (spectrum, grid) and then draws ensembles for arbitrary seeds.
class EnsembleSampler {
public:
    EnsembleSampler(std::shared_ptr<const PowerSpectrum> s, TimeGrid grid, int oversample = 1)
        : spectrum_(std::move(s)), grid_(grid) {
        grid_.validate();
        StationaryPathGenerator::Options opt;
        opt.oversample = oversample;
        for (const auto& e : spectrum_->entries()) {
            const int ell = e.ell;
            const double dt = grid_.dt;
            const PowerSpectrum* sp = spectrum_.get();
            gens_.push_back(std::make_unique<StationaryPathGenerator>(
                grid_.n_steps, [sp, ell, dt](long j) { return sp->cov(ell, dt * static_cast<double>(j)); }, opt));
        }
    }

    const TimeGrid& grid() const { return grid_; }
    const PowerSpectrum& spectrum() const { return *spectrum_; }

    /// Multipole l uses the stream derive_seed(seed, {l}); pairs of m share one FFT.
    CoefficientEnsemble sample(std::uint64_t seed) const {
        CoefficientEnsemble ens(spectrum_, grid_, seed);
        const auto n = static_cast<std::size_t>(grid_.n_steps);
        std::vector<double> p1(n), p2(n);
        const auto& es = spectrum_->entries();
        for (std::size_t i = 0; i < es.size(); ++i) {
            const int ell = es[i].ell;
            GaussianStream g(derive_seed(seed, {static_cast<std::uint64_t>(ell)}));
            const std::size_t base = ens.harmonic_index(ell, -ell);
            const int count = 2 * ell + 1;
            for (int j = 0; j < count; j += 2) {
                gens_[i]->generate(g, p1, p2);
                for (std::size_t k = 0; k < n; ++k) {
                    ens.coeff(static_cast<int>(k), base + static_cast<std::size_t>(j)) = p1[k];
                    if (j + 1 < count) ens.coeff(static_cast<int>(k), base + static_cast<std::size_t>(j + 1)) = p2[k];
                }
            }
            ens.clipped_eigenvalues += gens_[i]->clipped_eigenvalues();
        }
        return ens;
    }

private:
    std::shared_ptr<const PowerSpectrum> spectrum_;
    TimeGrid grid_;
    std::vector<std::unique_ptr<StationaryPathGenerator>> gens_;
};

inline CoefficientEnsemble sample_time_processes(const PowerSpectrum& s, const TimeGrid& grid, std::uint64_t seed) {
    return EnsembleSampler(std::make_shared<const PowerSpectrum>(s), grid).sample(seed);
}

// ---- binary cache -----------------------------------------------------------

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("ensemble file: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline constexpr char kEnsembleMagic[8] = {'S', 'P', 'H', 'L', 'E', 'V', 'C', 'E'};
inline constexpr std::uint64_t kEnsembleVersion = 1;

/// Layout: magic[8], version, spectrum hash, dt, n_steps, seed, n_harm as
/// little-endian 64-bit words, then n_steps rows of n_harm doubles.
inline void write_ensemble(const CoefficientEnsemble& e, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write(kEnsembleMagic, 8);
    detail::put_u64(os, kEnsembleVersion);
    detail::put_u64(os, fnv1a64(render_spectrum(e.spectrum())));
    detail::put_u64(os, std::bit_cast<std::uint64_t>(e.grid().dt));
    detail::put_u64(os, static_cast<std::uint64_t>(e.grid().n_steps));
    detail::put_u64(os, e.seed());
    detail::put_u64(os, e.harmonic_count());
    for (const double v : e.raw()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline CoefficientEnsemble read_ensemble(const std::string& path, std::shared_ptr<const PowerSpectrum> s) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kEnsembleMagic, 8) != 0)
        throw std::runtime_error("'" + path + "' is not an ensemble file");
    if (detail::get_u64(is) != kEnsembleVersion) throw std::runtime_error("ensemble file: unsupported version");
    if (detail::get_u64(is) != fnv1a64(render_spectrum(*s)))
        throw std::runtime_error("ensemble file: spectrum hash mismatch");
    TimeGrid g;
    g.dt = std::bit_cast<double>(detail::get_u64(is));
    g.n_steps = static_cast<int>(detail::get_u64(is));
    const auto seed = detail::get_u64(is);
    CoefficientEnsemble e(std::move(s), g, seed);
    if (detail::get_u64(is) != e.harmonic_count()) throw std::runtime_error("ensemble file: harmonic count mismatch");
    for (double& v : e.raw()) v = std::bit_cast<double>(detail::get_u64(is));
    return e;
}

}  // namespace sphlev
