#pragma once

/// \file limit_lab.hpp
/// Rosenblatt samplers, the Monte Carlo replicate runner, variance-scaling
/// fits, limit-law tests and the Berry level profile.

#include "sphlev/chaos_analysis.hpp"
#include "sphlev/covariance_model.hpp"
#include "sphlev/field_synthesis.hpp"
#include "sphlev/level_geometry.hpp"
#include "sphlev/random.hpp"
#include "sphlev/sphere_mesh.hpp"
#include "sphlev/statistics.hpp"
#include "sphlev/time_processes.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace sphlev {

// ---- deterministic parallel map ---------------------------------------------

/// Runs job(i) for i in [0, n) on `workers` threads; results land at index i,
/// so the output does not depend on scheduling. The first exception is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t n, int workers, const std::function<R(std::size_t)>& job) {
    std::vector<R> out(n);
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = job(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    auto run = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i] = job(i);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!err) err = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::thread> pool;
    const auto w = static_cast<std::size_t>(workers);
    for (std::size_t t = 0; t < std::min(w, n); ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
    return out;
}

// ---- Rosenblatt laws ---------------------------------------------------------

/// sigma(beta) = sqrt((1 - 2 beta)(1 - beta) / 2).
inline double rosenblatt_sigma(double beta) { return std::sqrt(0.5 * (1.0 - 2.0 * beta) * (1.0 - beta)); }

/// a(beta) = sigma(beta) / (2 Gamma(beta) sin((1 - beta) pi / 2)).
inline double rosenblatt_a(double beta) {
    return rosenblatt_sigma(beta) / (2.0 * std::tgamma(beta) * std::sin((1.0 - beta) * kPi / 2.0));
}

struct RosenblattSampler {
    double beta = 0.25;
    int n_inner = 1 << 16;
    int burn_factor = 4;  ///< circulant-embedding oversampling multiplier
};

namespace detail {

inline void check_rosenblatt_beta(double beta) {
    if (!(beta > 0.0 && beta < 0.5)) throw std::domain_error("Rosenblatt law requires beta in (0, 1/2)");
}

/// Var(sum_k H_2(xi_k)) = 2 sum_{i,j} r(i - j)^2 for r(h) = (1 + |h|)^-beta.
inline double h2_sum_variance(double beta, int n) {
    double s = static_cast<double>(n);
    for (int h = 1; h < n; ++h) s += 2.0 * (n - h) * std::pow(1.0 + h, -2.0 * beta);
    return 2.0 * s;
}

}  // namespace detail

/// Unit-variance draws of sum_k H_2(xi_k) over a long-memory path with
/// covariance (1 + |k|)^-beta, normalized by its exact finite-n variance.
/// Each FFT provides two independent draws.
inline std::vector<double> sample_rosenblatt(const RosenblattSampler& s, std::size_t count, std::uint64_t seed) {
    detail::check_rosenblatt_beta(s.beta);
    if (s.n_inner < 2) throw std::domain_error("Rosenblatt sampler: n_inner must be >= 2");
    StationaryPathGenerator::Options opt;
    opt.oversample = std::max(1, s.burn_factor);
    const double beta = s.beta;
    const StationaryPathGenerator gen(s.n_inner, [beta](long j) { return std::pow(1.0 + static_cast<double>(j), -beta); },
                                      opt);
    const double norm = 1.0 / std::sqrt(detail::h2_sum_variance(beta, s.n_inner));
    std::vector<double> out(count);
    std::vector<double> p1(static_cast<std::size_t>(s.n_inner)), p2(p1.size());
    GaussianStream g(derive_seed(seed, {0x524f53ULL}));
    for (std::size_t i = 0; i < count; i += 2) {
        gen.generate(g, p1, p2);
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < p1.size(); ++k) {
            a += p1[k] * p1[k] - 1.0;
            b += p2[k] * p2[k] - 1.0;
        }
        out[i] = a * norm;
        if (i + 1 < count) out[i + 1] = b * norm;
    }
    return out;
}

/// sum_k c_k X_k with i.i.d. standard Rosenblatt X_k.
inline std::vector<double> sample_composite_rosenblatt(const std::vector<double>& coeffs, const RosenblattSampler& s,
                                                       std::size_t count, std::uint64_t seed) {
    if (coeffs.empty()) throw std::invalid_argument("composite Rosenblatt: need at least one coefficient");
    const auto draws = sample_rosenblatt(s, count * coeffs.size(), seed);
    std::vector<double> out(count, 0.0);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t k = 0; k < coeffs.size(); ++k) out[i] += coeffs[k] * draws[i * coeffs.size() + k];
    return out;
}

// ---- pipeline -----------------------------------------------------------------

/// Quantities measured on one replicate, per level.
struct ReplicateOutcome {
    std::vector<double> total;    ///< C_T(u) from level-curve geometry (empty when geometry is off)
    std::vector<double> first;    ///< C_T(u)[1]
    std::vector<double> second;   ///< C_T(u)[2], spectral form
    std::vector<std::vector<double>> projections;  ///< quadrature C_T(u)[q], q = 1..q_max (optional)
    int perturbed_vertices = 0;
};

struct PipelineConfig {
    std::shared_ptr<const PowerSpectrum> spectrum;
    double dt = 0.25;
    int mesh_level = 5;
    bool geometry = true;    ///< run synthesis + level curves to get C_T(u)
    int quadrature_q = 0;    ///< if > 0, also compute quadrature projections up to this order
    int oversample = 1;
    int workers = 1;
};

/// Shares mesh, harmonic basis and path generators across all replicates of
/// one horizon.
class PipelineRunner {
public:
    PipelineRunner(const PipelineConfig& cfg, double T)
        : cfg_(cfg), grid_(TimeGrid::for_horizon(T, cfg.dt)), sampler_(cfg.spectrum, grid_, cfg.oversample) {
        if (cfg_.geometry || cfg_.quadrature_q > 0) {
            mesh_ = std::make_unique<SphereMesh>(build_icosphere(cfg_.mesh_level));
            basis_ = std::make_unique<HarmonicBasis>(*mesh_, harmonic_layout(*cfg_.spectrum));
            synth_ = std::make_unique<FieldSynthesizer>(*basis_);
        }
    }

    const TimeGrid& grid() const { return grid_; }

    ReplicateOutcome run_one(const std::vector<double>& us, std::uint64_t seed) const {
        const auto ens = sampler_.sample(seed);
        ReplicateOutcome r;
        for (const double u : us) {
            r.first.push_back(cfg_.spectrum->find(0) ? first_chaos(ens, u) : 0.0);
            r.second.push_back(second_chaos_spectral(ens, u));
        }
        if (cfg_.geometry) {
            const auto bf = boundary_functionals(ens, *synth_, *mesh_, us);
            for (const auto& b : bf) r.total.push_back(b.centered);
            if (!bf.empty()) r.perturbed_vertices = bf.front().perturbed_vertices;
        }
        if (cfg_.quadrature_q > 0) {
            const ChaosProjector proj(*mesh_, *synth_, std::sqrt(sigma1_sq(*cfg_.spectrum)), cfg_.quadrature_q);
            r.projections = proj.project(ens, us);
        }
        return r;
    }

    /// Replicate i uses derive_seed(master, {T-tag, i}).
    std::vector<ReplicateOutcome> run(const std::vector<double>& us, std::size_t replicates, std::uint64_t master) const {
        const auto tag = static_cast<std::uint64_t>(grid_.n_steps);
        return parallel_map<ReplicateOutcome>(replicates, cfg_.workers, [&](std::size_t i) {
            return run_one(us, derive_seed(master, {tag, static_cast<std::uint64_t>(i)}));
        });
    }

private:
    PipelineConfig cfg_;
    TimeGrid grid_;
    EnsembleSampler sampler_;
    std::unique_ptr<SphereMesh> mesh_;
    std::unique_ptr<HarmonicBasis> basis_;
    std::unique_ptr<FieldSynthesizer> synth_;
};

// ---- variance scaling -------------------------------------------------------------

struct ScalingFit {
    std::vector<double> T_ladder;
    std::vector<double> variances;
    std::vector<double> variance_se;
    double fitted_exponent = 0.0;
    double exponent_se = 0.0;
    double intercept = 0.0;  ///< log-variance at log T = 0
};

inline constexpr int kBootstrapResamples = 200;

/// Log-log WLS of Var(samples[i]) against T_ladder[i], with per-point SEs of
/// the log-variance from the replicate bootstrap.
inline ScalingFit fit_variance_scaling(const std::vector<double>& T_ladder, const std::vector<std::vector<double>>& samples,
                                       std::uint64_t seed) {
    if (T_ladder.size() != samples.size()) throw std::invalid_argument("scaling fit: ladder/sample mismatch");
    if (T_ladder.size() < 4) throw std::invalid_argument("scaling fit: ladder needs at least 4 horizons");
    for (std::size_t i = 1; i < T_ladder.size(); ++i)
        if (!(T_ladder[i] > T_ladder[i - 1])) throw std::invalid_argument("scaling fit: ladder must be strictly increasing");
    ScalingFit f;
    f.T_ladder = T_ladder;
    std::vector<double> lx, ly, ls;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double v = sample_variance(samples[i]);
        if (!(v > 0.0)) throw std::runtime_error("scaling fit: degenerate (zero) variance at T = " + format_double(T_ladder[i]));
        const double se = bootstrap_se(
            samples[i], [](std::span<const double> x) { return sample_variance(x); }, kBootstrapResamples,
            derive_seed(seed, {0xB0075ULL, i}));
        f.variances.push_back(v);
        f.variance_se.push_back(se);
        lx.push_back(std::log(T_ladder[i]));
        ly.push_back(std::log(v));
        ls.push_back(std::max(se / v, 1e-12));
    }
    const auto lf = weighted_linear_fit(lx, ly, ls);
    f.fitted_exponent = lf.slope;
    f.exponent_se = lf.slope_se;
    f.intercept = lf.intercept;
    return f;
}

// ---- limit laws --------------------------------------------------------------------

struct DistributionReport {
    Regime regime = Regime::Boundary;
    std::vector<double> standardized_samples;
    std::vector<double> reference_samples;  ///< empty for the Gaussian reference
    double ks_statistic = 0.0;
    double p_value = 1.0;
    double gaussian_ks_statistic = 0.0;  ///< always against N(0,1)
    double gaussian_p_value = 1.0;
    double threshold = 0.01;
    bool pass = false;
    std::vector<double> reference_weights;  ///< per I* multipole (long memory)
};

struct LimitTestOptions {
    double threshold = 0.01;
    std::size_t reference_count = 4000;
    RosenblattSampler sampler{};
};

/// Standardized weights C_l(0) w_l / sqrt(sum_{I*} (2l+1) C_l(0)^2 w_l^2) of
/// the composite-Rosenblatt limit, one per multipole of I*.
inline std::vector<double> limit_reference_weights(const PowerSpectrum& s, double u) {
    const auto rep = classify_regime(s);
    std::vector<double> w;
    double norm = 0.0, scale = 0.0;
    for (const int l : rep.i_star) {
        const double c0 = s.find(l)->c0;
        const double c = c0 * second_chaos_weight(u, l, rep.sigma1_sq);
        w.push_back(c);
        norm += (2.0 * l + 1.0) * c * c;
        // Size of the weight's two terms, so that a rounding residue at u* is recognized.
        const double mag = c0 * (std::abs(u * u - 1.0) + laplace_eigenvalue(l) / (2.0 * rep.sigma1_sq));
        scale += (2.0 * l + 1.0) * mag * mag;
    }
    if (!(norm > 1e-24 * scale)) throw std::domain_error("limit law: second-chaos weights vanish on I* (Berry level)");
    for (auto& c : w) c /= std::sqrt(norm);
    return w;
}

/// Theorem-style limit check on replicate samples of C_T(u): standardize by
/// the ensemble mean and sd, then KS against the regime's reference law.
inline DistributionReport test_limit_distribution(const PowerSpectrum& s, double u, const std::vector<double>& samples,
                                                  const LimitTestOptions& opt, std::uint64_t seed) {
    const auto rep = classify_regime(s);
    if (rep.regime == Regime::Boundary)
        throw std::domain_error("limit law: spectrum is in the boundary regime; neither limit theorem applies");
    const auto m = moments(samples);
    if (!(m.variance > 0.0)) throw std::runtime_error("limit law: degenerate samples");
    DistributionReport r;
    r.regime = rep.regime;
    r.threshold = opt.threshold;
    for (const double x : samples) r.standardized_samples.push_back((x - m.mean) / m.sd());
    const auto g = ks_normal(r.standardized_samples);
    r.gaussian_ks_statistic = g.statistic;
    r.gaussian_p_value = g.p_value;
    if (rep.regime == Regime::ShortMemory) {
        r.ks_statistic = g.statistic;
        r.p_value = g.p_value;
    } else {
        r.reference_weights = limit_reference_weights(s, u);
        std::vector<double> coeffs;
        for (std::size_t i = 0; i < rep.i_star.size(); ++i)
            for (int k = 0; k < 2 * rep.i_star[i] + 1; ++k) coeffs.push_back(r.reference_weights[i]);
        RosenblattSampler smp = opt.sampler;
        smp.beta = rep.beta_star;
        r.reference_samples = sample_composite_rosenblatt(coeffs, smp, opt.reference_count, seed);
        const auto k = ks_two_sample(r.standardized_samples, r.reference_samples);
        r.ks_statistic = k.statistic;
        r.p_value = k.p_value;
    }
    r.pass = r.p_value > opt.threshold;
    return r;
}

// ---- Berry profile --------------------------------------------------------------------

struct BerryRow {
    double u = 0.0;
    double variance = 0.0;      ///< empirical Var(C_T(u)[2])
    double variance_se = 0.0;
    double exact_variance = 0.0;  ///< var_second_chaos_exact
    std::optional<double> long_constant;
};

struct BerryProfile {
    std::vector<BerryRow> rows;
    std::optional<double> u_star;
    std::size_t argmin = 0;
};

/// Var(C_T(u)[2]) across a level grid, all levels sharing each replicate.
inline BerryProfile berry_study(std::shared_ptr<const PowerSpectrum> s, const std::vector<double>& u_grid, double T,
                                std::size_t replicates, std::uint64_t seed, double dt = 0.25, int workers = 1) {
    if (u_grid.empty()) throw std::invalid_argument("berry_study: empty level grid");
    PipelineConfig cfg;
    cfg.spectrum = s;
    cfg.dt = dt;
    cfg.geometry = false;
    cfg.workers = workers;
    const PipelineRunner runner(cfg, T);
    const auto outs = runner.run(u_grid, replicates, seed);
    const double Tg = runner.grid().horizon();
    BerryProfile p;
    const auto rep = classify_regime(*s);
    if (rep.berry_levels) p.u_star = (*rep.berry_levels)[1];
    for (std::size_t j = 0; j < u_grid.size(); ++j) {
        std::vector<double> x;
        for (const auto& o : outs) x.push_back(o.second[j]);
        BerryRow row;
        row.u = u_grid[j];
        row.variance = sample_variance(x);
        row.variance_se = variance_se(x);
        row.exact_variance = var_second_chaos_exact(*s, u_grid[j], Tg);
        row.long_constant = asymptotic_var_constants(*s, u_grid[j]).long_constant;
        p.rows.push_back(row);
        if (row.variance < p.rows[p.argmin].variance) p.argmin = j;
    }
    return p;
}

// ---- higher chaoses -------------------------------------------------------------------

struct TailEstimate {
    std::vector<double> T_ladder;
    std::vector<double> tail_variance;  ///< Var(C_T - C_T[1] - C_T[2])
    std::vector<double> tail_share;     ///< tail_variance / Var(C_T)
    ScalingFit fit;                     ///< growth of the tail variance
};

/// Empirical proxy for the q >= 3 tail on a T ladder. `outcomes[i]` holds the
/// replicates at T_ladder[i]; level index j selects u.
inline TailEstimate higher_chaos_tail_estimate(const std::vector<double>& T_ladder,
                                               const std::vector<std::vector<ReplicateOutcome>>& outcomes, std::size_t j,
                                               std::uint64_t seed) {
    TailEstimate t;
    t.T_ladder = T_ladder;
    std::vector<std::vector<double>> tails;
    for (const auto& reps : outcomes) {
        std::vector<double> tail, tot;
        for (const auto& o : reps) {
            if (o.total.empty()) throw std::invalid_argument("tail estimate: replicates lack the full functional");
            tail.push_back(o.total[j] - o.first[j] - o.second[j]);
            tot.push_back(o.total[j]);
        }
        const double v = sample_variance(tail);
        t.tail_variance.push_back(v);
        t.tail_share.push_back(v / sample_variance(tot));
        tails.push_back(std::move(tail));
    }
    t.fit = fit_variance_scaling(T_ladder, tails, seed);
    return t;
}

}  // namespace sphlev
