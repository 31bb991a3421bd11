#pragma once

/// \file chaos_analysis.hpp
/// Hermite-chaos coefficients of the level-length functional, its chaotic
/// projections (closed form and sphere-time quadrature) and the exact and
/// asymptotic second-chaos variances.

#include "sphlev/covariance_model.hpp"
#include "sphlev/field_synthesis.hpp"
#include "sphlev/sphere_mesh.hpp"
#include "sphlev/special_functions.hpp"
#include "sphlev/time_processes.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sphlev {

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

/// p_N(x) = sum_j (-1)^(j+N) binom(N, j) (2j+1)!/(j!)^2 x^j.
inline double p_poly(int N, double x) {
    if (N < 0) throw std::domain_error("p_poly: N must be >= 0");
    double s = 0.0;
    double binom = 1.0;  // binom(N, j), exact for the orders used
    double ratio = 1.0;  // (2j+1)!/(j!)^2
    double xp = 1.0;
    for (int j = 0; j <= N; ++j) {
        if (j > 0) {
            binom = binom * (N - j + 1) / j;
            ratio = ratio * (2.0 * j) * (2.0 * j + 1.0) / (static_cast<double>(j) * j);
            xp *= x;
        }
        const double sign = ((j + N) % 2 == 0) ? 1.0 : -1.0;
        s += sign * binom * ratio * xp;
    }
    return s;
}

/// alpha_{n,m}: Hermite coefficients of the Euclidean norm of a standard
/// Gaussian pair, so that E[|N| H_n(N_1) H_m(N_2)] = alpha_{n,m}. Zero unless
/// both indices are even.
inline double alpha_coeff(int n, int m) {
    if (n < 0 || m < 0) throw std::domain_error("alpha_coeff: indices must be >= 0");
    if (n % 2 != 0 || m % 2 != 0) return 0.0;
    const int a = n / 2, b = m / 2;
    // (2a)!/a! and (2b)!/b! as exact integer products.
    double f = 1.0;
    for (int i = a + 1; i <= 2 * a; ++i) f *= i;
    for (int i = b + 1; i <= 2 * b; ++i) f *= i;
    return std::sqrt(kPi / 2.0) * f * std::ldexp(1.0, -(a + b)) * p_poly(a + b, 0.25);
}

/// Coefficients and assembled weights of the chaos expansion at level u.
class ChaosTable {
public:
    static constexpr int kMaxOrder = 12;

    ChaosTable(double u, int q_max, double sigma1) : u_(u), q_max_(q_max), sigma1_(sigma1) {
        if (q_max < 0 || q_max > kMaxOrder)
            throw std::domain_error("chaos table: q_max must lie in [0, " + std::to_string(kMaxOrder) + "]");
        const auto n = static_cast<std::size_t>(q_max) + 1;
        alpha_.assign(n * n, 0.0);
        for (int i = 0; i <= q_max; ++i)
            for (int j = 0; i + j <= q_max; ++j) alpha_[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] = alpha_coeff(i, j);
        beta_.resize(n);
        hermite_all(u, beta_);
        const double ph = gaussian_density(u);
        for (auto& b : beta_) b *= ph;
        weights_.assign(n * n * n, 0.0);
        for (int q = 0; q <= q_max; ++q)
            for (int m = 0; m <= q; ++m)
                for (int k = 0; k <= m; ++k) {
                    const double a = alpha(k, m - k);
                    if (a == 0.0) continue;
                    const double lf = log_factorial(k) + log_factorial(m - k) + log_factorial(q - m);
                    weights_[index(q, m, k)] = sigma1 * a * beta_[static_cast<std::size_t>(q - m)] * std::exp(-lf);
                }
    }

    double u() const { return u_; }
    int q_max() const { return q_max_; }
    double sigma1() const { return sigma1_; }

    double alpha(int n, int m) const {
        if (n < 0 || m < 0 || n + m > q_max_) throw std::out_of_range("chaos table: alpha index outside the table");
        return alpha_[static_cast<std::size_t>(n) * static_cast<std::size_t>(q_max_ + 1) + static_cast<std::size_t>(m)];
    }
    double beta(int l) const { return beta_.at(static_cast<std::size_t>(l)); }

    /// sigma1 alpha_{k,m-k} beta_{q-m}(u) / (k! (m-k)! (q-m)!).
    double weight(int q, int m, int k) const {
        if (q < 0 || q > q_max_ || m < 0 || m > q || k < 0 || k > m)
            throw std::out_of_range("chaos table: weight index outside the table");
        return weights_[index(q, m, k)];
    }

private:
    std::size_t index(int q, int m, int k) const {
        const auto n = static_cast<std::size_t>(q_max_) + 1;
        return (static_cast<std::size_t>(q) * n + static_cast<std::size_t>(m)) * n + static_cast<std::size_t>(k);
    }

    double u_;
    int q_max_;
    double sigma1_;
    std::vector<double> alpha_;
    std::vector<double> beta_;
    std::vector<double> weights_;
};

inline ChaosTable chaos_table(double u, int q_max, double sigma1 = 1.0) { return ChaosTable(u, q_max, sigma1); }

/// Second-chaos multipole weight (u^2 - 1) + lambda_l / (2 sigma1^2).
inline double second_chaos_weight(double u, int ell, double sigma1_sq) {
    return (u * u - 1.0) + laplace_eigenvalue(ell) / (2.0 * sigma1_sq);
}

struct SamplePowerSpectrumPath {
    int ell = 0;
    std::vector<double> values;     ///< C_hat_l(t_k)
    double centered_integral = 0.0;  ///< int_0^T (C_hat_l - C_l(0)) dt
};

inline SamplePowerSpectrumPath sample_power_spectrum(const CoefficientEnsemble& e, int ell) {
    const auto* entry = e.spectrum().find(ell);
    if (!entry) throw std::invalid_argument("sample_power_spectrum: multipole l=" + std::to_string(ell) + " not in spectrum");
    const std::size_t base = e.harmonic_index(ell, -ell);
    const int count = 2 * ell + 1;
    SamplePowerSpectrumPath p;
    p.ell = ell;
    p.values.resize(static_cast<std::size_t>(e.steps()));
    std::vector<double> centered(p.values.size());
    for (int k = 0; k < e.steps(); ++k) {
        double s = 0.0;
        for (int j = 0; j < count; ++j) {
            const double a = e.coeff(k, base + static_cast<std::size_t>(j));
            s += a * a;
        }
        p.values[static_cast<std::size_t>(k)] = s / count;
        centered[static_cast<std::size_t>(k)] = s / count - entry->c0;
    }
    p.centered_integral = trapezoid(centered, e.grid().dt);
    return p;
}

/// sigma1 sqrt(2) pi u phi(u) int_0^T a_00(t) dt.
inline double first_chaos(const CoefficientEnsemble& e, double u) {
    if (!e.spectrum().find(0)) throw std::invalid_argument("first_chaos: l = 0 is not in the spectrum");
    const auto a00 = e.path(e.harmonic_index(0, 0));
    const double s1 = std::sqrt(sigma1_sq(e.spectrum()));
    return s1 * std::numbers::sqrt2 * kPi * u * gaussian_density(u) * trapezoid(a00, e.grid().dt);
}

/// Closed form via sample power spectra.
inline double second_chaos_spectral(const CoefficientEnsemble& e, double u) {
    const double s1sq = sigma1_sq(e.spectrum());
    double sum = 0.0;
    for (const auto& entry : e.spectrum().entries()) {
        const auto p = sample_power_spectrum(e, entry.ell);
        sum += (2.0 * entry.ell + 1.0) * second_chaos_weight(u, entry.ell, s1sq) * p.centered_integral;
    }
    return 0.5 * std::sqrt(s1sq) * std::sqrt(kPi / 2.0) * gaussian_density(u) * sum;
}

/// Hermite form: sum_l C_l(0)(2l+1)/(4 pi) w_l int int H_2(Zhat_l) dx dt, with
/// the sphere integral of H_2(Zhat_l) evaluated exactly from the coefficients.
inline double second_chaos_hermite(const CoefficientEnsemble& e, double u) {
    const double s1sq = sigma1_sq(e.spectrum());
    const int n = e.steps();
    double sum = 0.0;
    for (const auto& entry : e.spectrum().entries()) {
        if (entry.c0 == 0.0) continue;
        const double var = (2.0 * entry.ell + 1.0) * entry.c0 / kFourPi;
        const std::size_t base = e.harmonic_index(entry.ell, -entry.ell);
        std::vector<double> h2(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            double s = 0.0;
            for (int j = 0; j <= 2 * entry.ell; ++j) {
                const double a = e.coeff(k, base + static_cast<std::size_t>(j));
                s += a * a;
            }
            // int_S2 Zhat^2 dx = sum_m a_lm^2 / var; int_S2 1 dx = 4 pi.
            h2[static_cast<std::size_t>(k)] = s / var - kFourPi;
        }
        sum += var * second_chaos_weight(u, entry.ell, s1sq) * trapezoid(h2, e.grid().dt);
    }
    return 0.5 * std::sqrt(s1sq) * std::sqrt(kPi / 2.0) * gaussian_density(u) * sum;
}

/// C_T(u)[q], q = 1..q_max, by mesh quadrature of the triple-Hermite
/// integrand and trapezoidal time integration, slice by slice.
class ChaosProjector {
public:
    ChaosProjector(const SphereMesh& mesh, const FieldSynthesizer& synth, double sigma1_value, int q_max)
        : mesh_(mesh), synth_(synth), q_max_(q_max), sigma1_(sigma1_value) {
        if (q_max < 1 || q_max > ChaosTable::kMaxOrder) throw std::domain_error("chaos projection: q_max out of range");
        if (synth.basis().points() != static_cast<Eigen::Index>(mesh.vertices.size()))
            throw std::invalid_argument("synthesizer points do not match the mesh");
    }

    /// Returns projections for every level in `us`: out[j][q - 1].
    std::vector<std::vector<double>> project(const CoefficientEnsemble& e, const std::vector<double>& us,
                                             int block = 32) const {
        std::vector<ChaosTable> tables;
        for (const double u : us) tables.emplace_back(u, q_max_, sigma1_);
        // Sphere integrals of H_a(Z) H_b(G1) H_c(G2) for a + b + c <= q_max, per slice.
        const int q1 = q_max_ + 1;
        const auto nt = static_cast<std::size_t>(q1 * q1 * q1);
        const int n = e.steps();
        std::vector<double> acc(nt, 0.0);  // time integral (trapezoid) of the sphere integrals
        std::vector<double> hz(static_cast<std::size_t>(q1)), h1(hz.size()), h2(hz.size());
        std::vector<double> slice_int(nt);
        Matrix z, g1, g2;
        const double inv_s1 = 1.0 / sigma1_;
        for (int k0 = 0; k0 < n; k0 += block) {
            const int cnt = std::min(block, n - k0);
            z = synth_.values_block(e, k0, cnt);
            synth_.gradient_block(e, k0, cnt, g1, g2);
            for (int c = 0; c < cnt; ++c) {
                std::fill(slice_int.begin(), slice_int.end(), 0.0);
                for (Eigen::Index i = 0; i < z.rows(); ++i) {
                    const double w = mesh_.vertex_weights[static_cast<std::size_t>(i)];
                    hermite_all(z(i, c), hz);
                    hermite_all(g1(i, c) * inv_s1, h1);
                    hermite_all(g2(i, c) * inv_s1, h2);
                    for (int a = 0; a <= q_max_; ++a) {
                        const double wa = w * hz[static_cast<std::size_t>(a)];
                        for (int b = 0; a + b <= q_max_; b += 2) {
                            const double wab = wa * h1[static_cast<std::size_t>(b)];
                            for (int cc = 0; a + b + cc <= q_max_; cc += 2)
                                slice_int[tidx(a, b, cc)] += wab * h2[static_cast<std::size_t>(cc)];
                        }
                    }
                }
                const int k = k0 + c;
                const double tw = (k == 0 || k == n - 1) ? 0.5 : 1.0;
                for (std::size_t t = 0; t < nt; ++t) acc[t] += tw * e.grid().dt * slice_int[t];
            }
        }
        std::vector<std::vector<double>> out(us.size(), std::vector<double>(static_cast<std::size_t>(q_max_), 0.0));
        for (std::size_t j = 0; j < us.size(); ++j)
            for (int q = 1; q <= q_max_; ++q) {
                double s = 0.0;
                for (int m = 0; m <= q; ++m)
                    for (int kk = 0; kk <= m; kk += 2) {
                        if ((m - kk) % 2) continue;
                        s += tables[j].weight(q, m, kk) * acc[tidx(q - m, kk, m - kk)];
                    }
                out[j][static_cast<std::size_t>(q - 1)] = s;
            }
        return out;
    }

private:
    std::size_t tidx(int a, int b, int c) const {
        const auto q1 = static_cast<std::size_t>(q_max_ + 1);
        return (static_cast<std::size_t>(a) * q1 + static_cast<std::size_t>(b)) * q1 + static_cast<std::size_t>(c);
    }

    const SphereMesh& mesh_;
    const FieldSynthesizer& synth_;
    int q_max_;
    double sigma1_;
};

inline double chaos_projection_quadrature(const CoefficientEnsemble& e, const SphereMesh& mesh, double u, int q) {
    const HarmonicBasis basis(mesh, e.layout());
    const FieldSynthesizer synth(basis);
    const ChaosProjector proj(mesh, synth, std::sqrt(sigma1_sq(e.spectrum())), q);
    return proj.project(e, {u}).front()[static_cast<std::size_t>(q - 1)];
}

/// Var(C_T(u)[2]) = (sigma1^2 pi / 4) phi(u)^2 sum_l (2l+1) w_l^2 int int C_l^2.
inline double var_second_chaos_exact(const PowerSpectrum& s, double u, double T) {
    const double s1sq = sigma1_sq(s);
    const double ph = gaussian_density(u);
    double sum = 0.0;
    for (const auto& e : s.entries()) {
        if (e.c0 == 0.0) continue;
        const double w = second_chaos_weight(u, e.ell, s1sq);
        sum += (2.0 * e.ell + 1.0) * w * w * double_time_integral_Csq(s, e.ell, T).numeric;
    }
    return s1sq * kPi / 4.0 * ph * ph * sum;
}

/// Var(C_T(u)[1]) = 2 pi^2 sigma1^2 u^2 phi(u)^2 int int C_0(t - s) dt ds.
inline double var_first_chaos_exact(const PowerSpectrum& s, double u, double T) {
    const double ph = gaussian_density(u);
    return 2.0 * kPi * kPi * sigma1_sq(s) * u * u * ph * ph * double_time_integral_C(s, 0, T);
}

struct FirstChaosAsymptotics {
    std::optional<double> long_constant;   ///< limit of Var / T^(2 - beta_0), beta_0 < 1
    std::optional<double> short_constant;  ///< limit of Var / T, beta_0 = 1
};

inline FirstChaosAsymptotics first_chaos_asymptotics(const PowerSpectrum& s, double u) {
    const auto* e0 = s.find(0);
    FirstChaosAsymptotics r;
    if (!e0) return r;
    const double ph = gaussian_density(u);
    const double pre = 2.0 * kPi * kPi * sigma1_sq(s) * u * u * ph * ph;
    if (e0->beta < 1.0) {
        const double b = e0->beta;
        r.long_constant = pre * 2.0 * e0->c0 / ((1.0 - b) * (2.0 - b));
    } else {
        r.short_constant = pre * integral_C_real_line(s, 0);
    }
    return r;
}

struct AsymptoticVarConstants {
    std::optional<double> long_constant;   ///< lim Var(C_T(u)[2]) / T^(2 - 2 beta*)
    std::optional<double> short_constant;  ///< lim Var(C_T(u)[2]) / T
};

inline AsymptoticVarConstants asymptotic_var_constants(const PowerSpectrum& s, double u) {
    const auto rep = classify_regime(s);
    const double s1sq = rep.sigma1_sq;
    const double pre = s1sq * kPi / 4.0 * gaussian_density(u) * gaussian_density(u);
    AsymptoticVarConstants c;
    const auto* e0 = s.find(0);
    const double beta0 = (e0 && e0->c0 > 0.0) ? e0->beta : 1.0;
    if (2.0 * rep.beta_star < 1.0 && beta0 >= rep.beta_star) {
        double sum = 0.0;
        for (const int l : rep.i_star) {
            const auto* e = s.find(l);
            const double b = e->beta;
            const double w = second_chaos_weight(u, l, s1sq);
            sum += (2.0 * l + 1.0) * e->c0 * e->c0 * w * w / ((1.0 - 2.0 * b) * (1.0 - b));
        }
        c.long_constant = pre * sum;
    }
    bool all_short = true;
    for (const auto& e : s.entries())
        if (e.c0 > 0.0) all_short = all_short && 2.0 * e.beta > 1.0;
    if (all_short) {
        double sum = 0.0;
        for (const auto& e : s.entries()) {
            if (e.c0 == 0.0) continue;
            const double w = second_chaos_weight(u, e.ell, s1sq);
            sum += (2.0 * e.ell + 1.0) * w * w * integral_Csq_real_line(s, e.ell);
        }
        c.short_constant = pre * sum;
    }
    return c;
}

}  // namespace sphlev
