#pragma once

/// \file covariance_model.hpp
/// Angular power spectrum with per-multipole temporal memory and the
/// closed-form covariance quantities derived from it.

#include "sphlev/geometry.hpp"
#include "sphlev/special_functions.hpp"
#include "sphlev/text_format.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sphlev {

/// Memory kernel: (1+|tau|)^-beta for beta < 1, (1+|tau|)^-alpha for beta = 1.
inline double g_beta(double beta, double alpha, double tau) {
    if (!(beta > 0.0 && beta <= 1.0)) throw std::domain_error("beta must lie in (0,1]");
    if (beta == 1.0 && !(alpha >= 2.0)) throw std::domain_error("alpha must be >= 2 when beta = 1");
    const double e = (beta < 1.0) ? beta : alpha;
    return std::pow(1.0 + std::abs(tau), -e);
}

inline double laplace_eigenvalue(int ell) { return static_cast<double>(ell) * (ell + 1.0); }

struct MultipoleEntry {
    int ell = 0;
    double c0 = 0.0;
    double beta = 1.0;
    double alpha = 2.0;  ///< only used when beta == 1

    /// Decay exponent of the power-law tail.
    double decay() const { return beta < 1.0 ? beta : alpha; }
    bool operator==(const MultipoleEntry&) const = default;
};

/// Optional multiplicative envelope G_l(tau)/C_l(0); must equal 1 at tau = 0
/// and tend to 1 as tau grows. Absent means the canonical G_l == C_l(0).
using Envelope = std::function<double(double)>;

class PowerSpectrum {
public:
    struct Options {
        bool normalize = true;             ///< rescale c0 so that sigma0^2 = 1
        bool require_constant_mode = true;  ///< insist on c0 > 0 at l = 0
    };

    PowerSpectrum() = default;

    static PowerSpectrum create(std::vector<MultipoleEntry> entries, Options opt) {
        if (entries.empty()) throw std::invalid_argument("spectrum: no multipoles given");
        std::set<int> seen;
        for (const auto& e : entries) {
            if (e.ell < 0) throw std::domain_error("spectrum: ell must be >= 0");
            if (!seen.insert(e.ell).second)
                throw std::invalid_argument("spectrum: duplicate multipole ell=" + std::to_string(e.ell));
            if (!(e.c0 >= 0.0) || !std::isfinite(e.c0)) throw std::domain_error("c0 must be finite and >= 0");
            if (!(e.beta > 0.0 && e.beta <= 1.0)) throw std::domain_error("beta must lie in (0,1]");
            if (e.beta == 1.0 && !(e.alpha >= 2.0 && std::isfinite(e.alpha)))
                throw std::domain_error("alpha must be >= 2 when beta = 1");
        }
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.ell < b.ell; });
        if (opt.require_constant_mode && (entries.front().ell != 0 || !(entries.front().c0 > 0.0)))
            throw std::invalid_argument("spectrum: the l = 0 multipole must be present with c0 > 0");
        double var = 0.0;
        double smooth = 0.0;
        for (const auto& e : entries) {
            var += (2.0 * e.ell + 1.0) / kFourPi * e.c0;
            smooth += (2.0 * e.ell + 1.0) / kFourPi * e.c0 * e.ell * e.ell;
        }
        if (!(var > 0.0)) throw std::invalid_argument("spectrum: total variance is zero");
        if (!std::isfinite(smooth)) throw std::invalid_argument("spectrum: gradient variance is not finite");
        if (opt.normalize) {
            for (auto& e : entries) e.c0 /= var;
        } else if (std::abs(var - 1.0) > 1e-12) {
            throw std::invalid_argument("spectrum: sum (2l+1)/(4pi) c0 = " + format_double(var) +
                                        " differs from 1; set normalize = true");
        }
        PowerSpectrum s;
        s.entries_ = std::move(entries);
        s.envelopes_.resize(s.entries_.size());
        return s;
    }

    static PowerSpectrum create(std::vector<MultipoleEntry> entries) { return create(std::move(entries), Options{}); }

    /// Returns a copy with a user envelope attached to multipole `ell`.
    PowerSpectrum with_envelope(int ell, Envelope env) const {
        PowerSpectrum s = *this;
        const auto i = s.position(ell);
        if (!i) throw std::invalid_argument("with_envelope: unknown multipole");
        s.envelopes_[*i] = std::move(env);
        return s;
    }

    const std::vector<MultipoleEntry>& entries() const { return entries_; }
    int ell_max() const { return entries_.empty() ? -1 : entries_.back().ell; }
    bool has_envelope(int ell) const {
        const auto i = position(ell);
        return i && static_cast<bool>(envelopes_[*i]);
    }

    const MultipoleEntry* find(int ell) const {
        const auto i = position(ell);
        return i ? &entries_[*i] : nullptr;
    }

    /// Degrees with c0 > 0.
    std::vector<int> support() const {
        std::vector<int> out;
        for (const auto& e : entries_)
            if (e.c0 > 0.0) out.push_back(e.ell);
        return out;
    }

    /// C_l(tau); zero for a multipole outside the spectrum.
    double cov(int ell, double tau) const {
        const auto i = position(ell);
        if (!i) return 0.0;
        const auto& e = entries_[*i];
        double v = e.c0 * g_beta(e.beta, e.alpha, tau);
        if (envelopes_[*i]) v *= envelopes_[*i](tau);
        return v;
    }

    double variance() const {
        double v = 0.0;
        for (const auto& e : entries_) v += (2.0 * e.ell + 1.0) / kFourPi * e.c0;
        return v;
    }

    /// Number of real coefficient processes a_lm (sum of 2l+1 over entries).
    int harmonic_count() const {
        int n = 0;
        for (const auto& e : entries_) n += 2 * e.ell + 1;
        return n;
    }

    bool operator==(const PowerSpectrum& o) const { return entries_ == o.entries_; }

private:
    std::optional<std::size_t> position(int ell) const {
        const auto it = std::lower_bound(entries_.begin(), entries_.end(), ell,
                                         [](const MultipoleEntry& e, int l) { return e.ell < l; });
        if (it == entries_.end() || it->ell != ell) return std::nullopt;
        return static_cast<std::size_t>(it - entries_.begin());
    }

    std::vector<MultipoleEntry> entries_;
    std::vector<Envelope> envelopes_;
};

inline double cov_C(const PowerSpectrum& s, int ell, double tau) { return s.cov(ell, tau); }

/// Gamma(eta, tau) and its first two eta-derivatives.
struct CovarianceDerivs {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

inline CovarianceDerivs space_time_cov_derivs(const PowerSpectrum& s, double eta, double tau) {
    if (!(std::abs(eta) <= 1.0)) throw std::domain_error("space_time_cov: |eta| must be <= 1");
    const int lmax = s.ell_max();
    std::vector<double> p(static_cast<std::size_t>(lmax) + 1), dp(p.size()), d2p(p.size());
    legendre_table(lmax, eta, p, dp, d2p);
    CovarianceDerivs out;
    for (const auto& e : s.entries()) {
        const double w = (2.0 * e.ell + 1.0) / kFourPi * s.cov(e.ell, tau);
        const auto l = static_cast<std::size_t>(e.ell);
        out.value += w * p[l];
        out.d1 += w * dp[l];
        out.d2 += w * d2p[l];
    }
    return out;
}

inline double space_time_cov(const PowerSpectrum& s, double eta, double tau) {
    return space_time_cov_derivs(s, eta, tau).value;
}

inline double sigma1_sq(const PowerSpectrum& s) {
    double v = 0.0;
    for (const auto& e : s.entries()) v += (2.0 * e.ell + 1.0) / kFourPi * e.c0 * laplace_eigenvalue(e.ell) / 2.0;
    return v;
}

using Mat3x3 = std::array<std::array<double, 3>, 3>;

/// Cov((Z, d1 Z, d2 Z)(x, t), (Z, d1 Z, d2 Z)(y, s)) with tau = t - s, in the
/// orthonormal (theta, phi) frames at x and y. Entry [a][b] pairs component a
/// at x with component b at y.
inline Mat3x3 grad_cov_matrix(const PowerSpectrum& s, const SphericalCoord& x, const SphericalCoord& y, double tau) {
    constexpr double pole_eps = 1e-9;
    if (std::sin(x.theta) < pole_eps || std::sin(y.theta) < pole_eps)
        throw std::domain_error("grad_cov_matrix: point at a pole (tangent frame undefined)");
    const Vec3 px = to_cartesian(x);
    const Vec3 py = to_cartesian(y);
    const double eta = std::clamp(dot(px, py), -1.0, 1.0);
    const auto g = space_time_cov_derivs(s, eta, tau);
    const auto fx = tangent_frame(x);
    const auto fy = tangent_frame(y);
    const std::array<Vec3, 2> ex{fx.e_theta, fx.e_phi};
    const std::array<Vec3, 2> ey{fy.e_theta, fy.e_phi};
    // Gamma(<x, y>) differentiated along the frame vectors: d/dx_a <x,y> = <e_a(x), y>.
    Mat3x3 m{};
    m[0][0] = g.value;
    for (int b = 0; b < 2; ++b) m[0][b + 1] = g.d1 * dot(px, ey[b]);
    for (int a = 0; a < 2; ++a) m[a + 1][0] = g.d1 * dot(ex[a], py);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            m[a + 1][b + 1] = g.d2 * dot(ex[a], py) * dot(px, ey[b]) + g.d1 * dot(ex[a], ey[b]);
    return m;
}

enum class Regime { LongMemory, ShortMemory, Boundary };

inline std::string_view regime_name(Regime r) {
    switch (r) {
        case Regime::LongMemory: return "long-memory";
        case Regime::ShortMemory: return "short-memory";
        case Regime::Boundary: return "boundary";
    }
    return "?";
}

struct RegimeReport {
    Regime regime = Regime::Boundary;
    int ell_star = -1;  ///< smallest degree in i_star
    std::vector<int> i_star;
    double beta_star = 1.0;
    std::optional<double> beta_star_star;
    std::optional<std::array<double, 2>> berry_levels;  ///< {-u*, +u*}
    double sigma1_sq = 0.0;
    std::optional<double> expected_var_exponent;
};

/// Minimum memory exponent over l >= 1 in the support; I* collects every
/// degree of the support attaining it (l = 0 included when beta_0 ties).
inline RegimeReport classify_regime(const PowerSpectrum& s) {
    const auto* e0 = s.find(0);
    const bool has0 = e0 && e0->c0 > 0.0;
    double beta0 = has0 ? e0->beta : 1.0;
    std::map<int, double> betas;  // degree -> beta, l >= 1, c0 > 0
    for (const auto& e : s.entries())
        if (e.ell >= 1 && e.c0 > 0.0) betas[e.ell] = e.beta;
    if (betas.empty()) throw std::invalid_argument("classify_regime: spectrum has no multipole with l >= 1");

    RegimeReport r;
    r.sigma1_sq = sigma1_sq(s);
    r.beta_star = std::numeric_limits<double>::infinity();
    for (const auto& [l, b] : betas) r.beta_star = std::min(r.beta_star, b);
    if (has0 && beta0 == r.beta_star) r.i_star.push_back(0);
    std::optional<double> bss;
    for (const auto& [l, b] : betas) {
        if (b == r.beta_star) {
            r.i_star.push_back(l);
        } else {
            bss = bss ? std::min(*bss, b) : b;
        }
    }
    r.beta_star_star = bss;
    r.ell_star = *std::find_if(r.i_star.begin(), r.i_star.end(), [](int l) { return l >= 1; });

    if (2.0 * r.beta_star < std::min(beta0, 1.0)) {
        r.regime = Regime::LongMemory;
        r.expected_var_exponent = 2.0 - 2.0 * r.beta_star;
    } else {
        bool all_short = beta0 == 1.0;
        for (const auto& [l, b] : betas) all_short = all_short && (2.0 * b > 1.0);
        r.regime = all_short ? Regime::ShortMemory : Regime::Boundary;
        if (all_short) r.expected_var_exponent = 1.0;
    }
    if (r.i_star.size() == 1 && r.sigma1_sq > 0.0) {
        const double ratio = laplace_eigenvalue(r.ell_star) / (2.0 * r.sigma1_sq);
        if (ratio <= 1.0) {
            const double u = std::sqrt(1.0 - ratio);
            r.berry_levels = std::array<double, 2>{-u, u};
        }
    }
    return r;
}

namespace detail {

/// Integrates f over [a, b] by splitting at 1 and then at geometric points,
/// so each panel sees a smooth, slowly varying power law.
template <class F>
double integrate_power_law(F&& f, double a, double b) {
    if (!(b > a)) return 0.0;
    std::vector<double> knots{a};
    double k = 1.0;
    while (k < b) {
        if (k > a) knots.push_back(k);
        k *= 4.0;
    }
    knots.push_back(b);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, knots[i], knots[i + 1], 15, 1e-11);
    return total;
}

}  // namespace detail

/// Closed-form or numerically integrated int_R C_l(tau)^2 dtau for an
/// integrable square (2 * decay > 1).
inline double integral_Csq_real_line(const PowerSpectrum& s, int ell) {
    const auto* e = s.find(ell);
    if (!e || e->c0 == 0.0) return 0.0;
    const double p = 2.0 * e->decay();
    if (!(p > 1.0)) return std::numeric_limits<double>::infinity();
    if (!s.has_envelope(ell)) return 2.0 * e->c0 * e->c0 / (p - 1.0);
    constexpr double cut = 1e5;
    const double body = detail::integrate_power_law([&](double t) { return s.cov(ell, t) * s.cov(ell, t); }, 0.0, cut);
    // Envelope tends to 1, so the tail is the pure power law beyond the cut.
    const double tail = e->c0 * e->c0 * std::pow(1.0 + cut, 1.0 - p) / (p - 1.0);
    return 2.0 * (body + tail);
}

/// int_R C_l(tau) dtau (finite only when the decay exponent exceeds 1).
inline double integral_C_real_line(const PowerSpectrum& s, int ell) {
    const auto* e = s.find(ell);
    if (!e || e->c0 == 0.0) return 0.0;
    const double p = e->decay();
    if (!(p > 1.0)) return std::numeric_limits<double>::infinity();
    if (!s.has_envelope(ell)) return 2.0 * e->c0 / (p - 1.0);
    constexpr double cut = 1e5;
    const double body = detail::integrate_power_law([&](double t) { return s.cov(ell, t); }, 0.0, cut);
    return 2.0 * (body + e->c0 * std::pow(1.0 + cut, 1.0 - p) / (p - 1.0));
}

struct DoubleTimeIntegral {
    double numeric = 0.0;                 ///< int_[0,T]^2 C_l(t-s)^2 dt ds
    std::optional<double> asymptotic;     ///< leading-order prediction, absent when 2 beta = 1
    std::optional<double> growth_exponent;  ///< exponent of T in the prediction
};

inline DoubleTimeIntegral double_time_integral_Csq(const PowerSpectrum& s, int ell, double T) {
    if (!(T > 0.0)) throw std::domain_error("double_time_integral_Csq: T must be > 0");
    DoubleTimeIntegral r;
    const auto* e = s.find(ell);
    if (!e) {
        r.asymptotic = 0.0;
        return r;
    }
    r.numeric =
        2.0 * detail::integrate_power_law([&](double t) { return (T - t) * s.cov(ell, t) * s.cov(ell, t); }, 0.0, T);
    const double b = e->beta;
    if (b < 1.0 && 2.0 * b < 1.0) {
        r.growth_exponent = 2.0 - 2.0 * b;
        r.asymptotic = std::pow(T, 2.0 - 2.0 * b) * e->c0 * e->c0 / ((1.0 - b) * (1.0 - 2.0 * b));
    } else if (2.0 * b > 1.0) {
        r.growth_exponent = 1.0;
        r.asymptotic = T * integral_Csq_real_line(s, ell);
    }
    return r;
}

/// int_[0,T]^2 C_l(t-s) dt ds (used for first-chaos variances).
inline double double_time_integral_C(const PowerSpectrum& s, int ell, double T) {
    if (!(T > 0.0)) throw std::domain_error("double_time_integral_C: T must be > 0");
    if (!s.find(ell)) return 0.0;
    return 2.0 * detail::integrate_power_law([&](double t) { return (T - t) * s.cov(ell, t); }, 0.0, T);
}

// ---- text form ------------------------------------------------------------

/// Renders `[multipole]` blocks; parse_spectrum_blocks(render) reproduces the entries.
inline std::string render_spectrum(const PowerSpectrum& s) {
    std::string out;
    for (const auto& e : s.entries()) {
        out += "[multipole]\n";
        out += "ell = " + std::to_string(e.ell) + "\n";
        out += "c0 = " + format_double(e.c0) + "\n";
        out += "beta = " + format_double(e.beta) + "\n";
        out += "alpha = " + format_double(e.alpha) + "\n";
    }
    return out;
}

inline std::string spectrum_hash(const PowerSpectrum& s) { return hex64(fnv1a64(render_spectrum(s))); }

/// Collects `[multipole]` records from lexed lines. Keys outside multipole
/// blocks are left to the caller; `consumed` marks the lines used here.
inline std::vector<MultipoleEntry> parse_multipole_blocks(const std::vector<TextLine>& lines,
                                                          std::vector<bool>& consumed) {
    consumed.assign(lines.size(), false);
    std::vector<MultipoleEntry> out;
    struct Partial {
        MultipoleEntry e;
        bool has_ell = false, has_c0 = false, has_beta = false, has_alpha = false;
        int line = 0;
    };
    std::optional<Partial> cur;
    auto flush = [&]() {
        if (!cur) return;
        if (!cur->has_ell) throw ConfigError("ell", cur->line, "multipole block is missing 'ell'");
        if (!cur->has_c0) throw ConfigError("c0", cur->line, "multipole block is missing 'c0'");
        if (!cur->has_beta) throw ConfigError("beta", cur->line, "multipole block is missing 'beta'");
        out.push_back(cur->e);
        cur.reset();
    };
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& l = lines[i];
        if (!l.section.empty()) {
            flush();
            if (l.section == "multipole") {
                cur = Partial{};
                cur->line = l.number;
                consumed[i] = true;
            }
            continue;
        }
        if (!cur) continue;
        consumed[i] = true;
        if (l.key == "ell") {
            const auto v = parse_integer(l);
            if (v < 0 || v > 10000) throw ConfigError(l.key, l.number, "ell must be a degree in [0, 10000]");
            cur->e.ell = static_cast<int>(v);
            cur->has_ell = true;
        } else if (l.key == "c0") {
            cur->e.c0 = parse_double(l);
            if (!(cur->e.c0 >= 0.0)) throw ConfigError(l.key, l.number, "c0 must be >= 0");
            cur->has_c0 = true;
        } else if (l.key == "beta") {
            cur->e.beta = parse_double(l);
            if (!(cur->e.beta > 0.0 && cur->e.beta <= 1.0))
                throw ConfigError(l.key, l.number, "beta must lie in (0,1]");
            cur->has_beta = true;
        } else if (l.key == "alpha") {
            cur->e.alpha = parse_double(l);
            cur->has_alpha = true;
        } else {
            throw ConfigError(l.key, l.number, "unknown key in [multipole] block");
        }
        if (cur->has_beta && cur->e.beta == 1.0 && cur->has_alpha && !(cur->e.alpha >= 2.0))
            throw ConfigError("alpha", l.number, "alpha must be >= 2 when beta = 1");
    }
    flush();
    return out;
}

/// Standalone spectrum text: `[multipole]` blocks plus an optional top-level
/// `normalize = true|false` line (default true).
inline PowerSpectrum parse_spectrum(std::string_view text) {
    const auto lines = lex_key_value_text(text);
    std::vector<bool> consumed;
    auto entries = parse_multipole_blocks(lines, consumed);
    PowerSpectrum::Options opt;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (consumed[i] || !lines[i].section.empty()) continue;
        if (lines[i].key == "normalize") {
            opt.normalize = parse_bool(lines[i]);
        } else {
            throw ConfigError(lines[i].key, lines[i].number, "unknown key");
        }
    }
    return PowerSpectrum::create(std::move(entries), opt);
}

}  // namespace sphlev
