#pragma once

/// \file special_functions.hpp
/// Legendre polynomials, real spherical harmonics, Hermite polynomials and
/// the Gaussian density. All routines use upward three-term recurrences,
/// which are accurate for the degree range used here (a few hundred at most;
/// accuracy degrades beyond l ~ 500).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphlev {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kFourPi = 4.0 * std::numbers::pi;

struct LegendreEval {
    int ell = 0;
    double value = 0.0;
    double first_deriv = 0.0;   ///< dP/d(eta)
    double second_deriv = 0.0;  ///< d^2P/d(eta)^2
};

/// Fills p[0..lmax], dp[0..lmax], d2p[0..lmax] with P_l(eta) and its first two
/// derivatives. Derivatives come from their own recurrences, so they stay
/// finite at eta = +-1.
inline void legendre_table(int lmax, double eta, std::span<double> p, std::span<double> dp,
                           std::span<double> d2p) {
    if (lmax < 0) throw std::domain_error("legendre: degree must be >= 0");
    if (!(std::abs(eta) <= 1.0)) throw std::domain_error("legendre: |eta| must be <= 1");
    const auto n = static_cast<std::size_t>(lmax) + 1;
    if (p.size() < n || dp.size() < n || d2p.size() < n)
        throw std::invalid_argument("legendre_table: output spans too small");
    p[0] = 1.0;
    dp[0] = 0.0;
    d2p[0] = 0.0;
    if (lmax == 0) return;
    p[1] = eta;
    dp[1] = 1.0;
    d2p[1] = 0.0;
    for (int l = 1; l < lmax; ++l) {
        const auto i = static_cast<std::size_t>(l);
        p[i + 1] = ((2.0 * l + 1.0) * eta * p[i] - l * p[i - 1]) / (l + 1.0);
        // P'_{l+1} = P'_{l-1} + (2l+1) P_l, and the same identity differentiated once.
        dp[i + 1] = dp[i - 1] + (2.0 * l + 1.0) * p[i];
        d2p[i + 1] = d2p[i - 1] + (2.0 * l + 1.0) * dp[i];
    }
}

inline LegendreEval legendre(int ell, double eta) {
    std::vector<double> buf(3 * (static_cast<std::size_t>(ell < 0 ? 0 : ell) + 1));
    const std::size_t n = buf.size() / 3;
    std::span<double> all(buf);
    legendre_table(ell, eta, all.subspan(0, n), all.subspan(n, n), all.subspan(2 * n, n));
    const auto i = static_cast<std::size_t>(ell);
    return {ell, buf[i], buf[n + i], buf[2 * n + i]};
}

/// Orthonormal associated Legendre functions
///   Pbar_l^m(cos theta) = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(cos theta)
/// without the Condon-Shortley phase, together with Pbar/sin(theta) (m >= 1)
/// and d Pbar / d theta. The normalization is carried through the recurrence,
/// so no factorials appear.
class AssociatedLegendreTable {
public:
    explicit AssociatedLegendreTable(int lmax) : lmax_(lmax) {
        if (lmax < 0) throw std::domain_error("associated Legendre: lmax must be >= 0");
        const auto n = index(lmax, lmax) + 1;
        p_.assign(n, 0.0);
        q_.assign(n, 0.0);
        dp_.assign(n, 0.0);
    }

    static constexpr std::size_t index(int l, int m) {
        return static_cast<std::size_t>(l) * (static_cast<std::size_t>(l) + 1) / 2 +
               static_cast<std::size_t>(m);
    }

    int lmax() const { return lmax_; }

    /// Evaluates every (l, m), 0 <= m <= l <= lmax, at colatitude theta.
    void evaluate(double theta) {
        const double x = std::cos(theta);
        const double s = std::sin(theta);
        std::fill(p_.begin(), p_.end(), 0.0);
        std::fill(q_.begin(), q_.end(), 0.0);
        // Sectoral seeds.
        double pmm = 1.0 / std::sqrt(kFourPi);
        double qmm = 0.0;
        for (int m = 0; m <= lmax_; ++m) {
            if (m > 0) {
                const double f = std::sqrt((2.0 * m + 1.0) / (2.0 * m));
                qmm = (m == 1) ? f * pmm : f * s * qmm;
                pmm = f * s * pmm;
            }
            p_[index(m, m)] = pmm;
            q_[index(m, m)] = qmm;
            if (m + 1 <= lmax_) {
                const double c = std::sqrt(2.0 * m + 3.0);
                p_[index(m + 1, m)] = c * x * pmm;
                q_[index(m + 1, m)] = c * x * qmm;
            }
            for (int l = m + 2; l <= lmax_; ++l) {
                const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - m * m));
                const double b = std::sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
                p_[index(l, m)] = a * (x * p_[index(l - 1, m)] - b * p_[index(l - 2, m)]);
                q_[index(l, m)] = a * (x * q_[index(l - 1, m)] - b * q_[index(l - 2, m)]);
            }
        }
        for (int l = 0; l <= lmax_; ++l) {
            for (int m = 0; m <= l; ++m) {
                const double up = (m < l) ? p_[index(l, m + 1)] : 0.0;
                if (m == 0) {
                    dp_[index(l, 0)] = -std::sqrt(static_cast<double>(l) * (l + 1.0)) * up;
                } else {
                    const double down = p_[index(l, m - 1)];
                    dp_[index(l, m)] = 0.5 * (std::sqrt((l + m) * (l - m + 1.0)) * down -
                                              std::sqrt((l - m) * (l + m + 1.0)) * up);
                }
            }
        }
    }

    double value(int l, int m) const { return p_[index(l, m)]; }
    /// Pbar_l^m / sin(theta); zero for m = 0 (unused there).
    double value_over_sin(int l, int m) const { return q_[index(l, m)]; }
    double d_theta(int l, int m) const { return dp_[index(l, m)]; }

private:
    int lmax_;
    std::vector<double> p_;
    std::vector<double> q_;
    std::vector<double> dp_;
};

/// Value and orthonormal-frame derivatives (d/dtheta, (1/sin theta) d/dphi).
struct HarmonicValue {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

inline void check_harmonic_args(int ell, int m) {
    if (ell < 0 || m < -ell || m > ell)
        throw std::domain_error("spherical harmonic: need l >= 0 and |m| <= l (got l=" +
                                std::to_string(ell) + ", m=" + std::to_string(m) + ")");
}

/// Real orthonormal harmonic from a table already evaluated at theta.
/// Convention: Y_l0 = Pbar_l^0, Y_lm = sqrt2 Pbar_l^m cos(m phi) for m > 0,
/// Y_l,-m = sqrt2 Pbar_l^m sin(m phi).
inline HarmonicValue real_harmonic_from_table(const AssociatedLegendreTable& t, int ell, int m,
                                              double phi) {
    const int am = m < 0 ? -m : m;
    if (am == 0) return {t.value(ell, 0), t.d_theta(ell, 0), 0.0};
    const double c = std::cos(am * phi);
    const double s = std::sin(am * phi);
    const double r2 = std::numbers::sqrt2;
    if (m > 0)
        return {r2 * t.value(ell, am) * c, r2 * t.d_theta(ell, am) * c,
                -r2 * am * t.value_over_sin(ell, am) * s};
    return {r2 * t.value(ell, am) * s, r2 * t.d_theta(ell, am) * s,
            r2 * am * t.value_over_sin(ell, am) * c};
}

inline HarmonicValue real_spherical_harmonic_with_gradient(int ell, int m, double theta, double phi) {
    check_harmonic_args(ell, m);
    if (!(theta >= 0.0 && theta <= kPi)) throw std::domain_error("spherical harmonic: theta must lie in [0, pi]");
    AssociatedLegendreTable t(ell);
    t.evaluate(theta);
    return real_harmonic_from_table(t, ell, m, phi);
}

inline double real_spherical_harmonic(int ell, int m, double theta, double phi) {
    const auto h = real_spherical_harmonic_with_gradient(ell, m, theta, phi);
    // Exact zero at the poles for m != 0 (sin(theta) may round to ~1e-16).
    if (m != 0 && (theta == 0.0 || theta == kPi)) return 0.0;
    return h.value;
}

/// Probabilists' Hermite polynomial He_q(u).
inline double hermite(int q, double u) {
    if (q < 0) throw std::domain_error("hermite: order must be >= 0");
    if (q == 0) return 1.0;
    double hm1 = 1.0;
    double h = u;
    for (int k = 1; k < q; ++k) {
        const double next = u * h - k * hm1;
        hm1 = h;
        h = next;
    }
    return h;
}

/// out[q] = He_q(u) for q = 0..out.size()-1.
inline void hermite_all(double u, std::span<double> out) {
    if (out.empty()) return;
    out[0] = 1.0;
    if (out.size() == 1) return;
    out[1] = u;
    for (std::size_t k = 1; k + 1 < out.size(); ++k)
        out[k + 1] = u * out[k] - static_cast<double>(k) * out[k - 1];
}

inline double gaussian_density(double u) {
    return std::exp(-0.5 * u * u) / std::sqrt(2.0 * kPi);
}

inline double gaussian_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

}  // namespace sphlev
