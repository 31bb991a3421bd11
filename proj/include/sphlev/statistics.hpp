#pragma once

/// \file statistics.hpp
/// Sample moments, Kolmogorov-Smirnov tests, weighted least squares and the
/// replicate bootstrap used by the Monte Carlo studies.

#include "sphlev/random.hpp"
#include "sphlev/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace sphlev {

struct SampleMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  ///< unbiased
    double skewness = 0.0;
    double excess_kurtosis = 0.0;

    double sd() const { return std::sqrt(variance); }
    double mean_se() const { return std::sqrt(variance / static_cast<double>(n)); }
    /// Large-sample SE of the skewness / excess kurtosis under Gaussianity.
    double skewness_se() const { return std::sqrt(6.0 / static_cast<double>(n)); }
    double kurtosis_se() const { return std::sqrt(24.0 / static_cast<double>(n)); }
};

inline SampleMoments moments(std::span<const double> x) {
    SampleMoments m;
    m.n = x.size();
    if (m.n < 2) throw std::invalid_argument("moments: need at least two samples");
    double s = 0.0;
    for (const double v : x) s += v;
    m.mean = s / static_cast<double>(m.n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (const double v : x) {
        const double d = v - m.mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    const auto n = static_cast<double>(m.n);
    m.variance = m2 / (n - 1.0);
    const double pv = m2 / n;
    if (pv > 0.0) {
        m.skewness = (m3 / n) / std::pow(pv, 1.5);
        m.excess_kurtosis = (m4 / n) / (pv * pv) - 3.0;
    }
    return m;
}

inline double sample_mean(std::span<const double> x) { return moments(x).mean; }
inline double sample_variance(std::span<const double> x) { return moments(x).variance; }

/// SE of the unbiased sample variance from the fourth central moment.
inline double variance_se(std::span<const double> x) {
    const auto m = moments(x);
    const auto n = static_cast<double>(m.n);
    double m4 = 0.0;
    for (const double v : x) m4 += std::pow(v - m.mean, 4);
    m4 /= n;
    const double s4 = m.variance * m.variance;
    return std::sqrt(std::max(0.0, (m4 - s4 * (n - 3.0) / (n - 1.0)) / n));
}

inline double correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("correlation: size mismatch");
    const double mx = sample_mean(x), my = sample_mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// Complementary Kolmogorov distribution Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double n_effective = 0.0;
};

/// Asymptotic p-value with the Stephens small-sample correction.
inline double ks_p_value(double d, double n_eff) {
    const double r = std::sqrt(n_eff);
    return kolmogorov_q((r + 0.12 + 0.11 / r) * d);
}

inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
    if (x.empty()) throw std::invalid_argument("ks_one_sample: empty sample");
    std::sort(x.begin(), x.end());
    const auto n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, ks_p_value(d, n), n};
}

inline KsResult ks_normal(std::vector<double> x) { return ks_one_sample(std::move(x), gaussian_cdf); }

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const auto na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = na * nb / (na + nb);
    return {d, ks_p_value(d, ne), ne};
}

struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
};

/// Weighted least squares y = a + b x with weights 1/sigma^2. Slope SE from
/// the weights (sigmas taken as known).
inline LinearFit weighted_linear_fit(std::span<const double> x, std::span<const double> y,
                                     std::span<const double> sigma) {
    if (x.size() != y.size() || x.size() != sigma.size() || x.size() < 2)
        throw std::invalid_argument("weighted_linear_fit: need matching inputs with >= 2 points");
    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw std::invalid_argument("weighted_linear_fit: sigma must be > 0");
        const double w = 1.0 / (sigma[i] * sigma[i]);
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    const double det = sw * sxx - sx * sx;
    if (!(det > 0.0)) throw std::invalid_argument("weighted_linear_fit: degenerate design");
    LinearFit f;
    f.slope = (sw * sxy - sx * sy) / det;
    f.intercept = (sxx * sy - sx * sxy) / det;
    f.slope_se = std::sqrt(sw / det);
    f.intercept_se = std::sqrt(sxx / det);
    return f;
}

/// Ordinary least squares with residual-based slope SE.
inline LinearFit ols_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("ols_fit: need >= 3 matching points");
    const auto n = static_cast<double>(x.size());
    const double mx = sample_mean(x), my = sample_mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss += r * r;
    }
    const double s2 = rss / (n - 2.0);
    f.slope_se = std::sqrt(s2 / sxx);
    f.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    return f;
}

/// Bootstrap SE of a statistic over replicates, with a seeded resampler.
inline double bootstrap_se(std::span<const double> x, const std::function<double(std::span<const double>)>& stat,
                           int resamples, std::uint64_t seed) {
    if (x.size() < 2 || resamples < 2) throw std::invalid_argument("bootstrap_se: too few samples");
    std::mt19937_64 eng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    std::vector<double> buf(x.size()), stats(static_cast<std::size_t>(resamples));
    for (auto& s : stats) {
        for (auto& b : buf) b = x[pick(eng)];
        s = stat(buf);
    }
    return std::sqrt(sample_variance(stats));
}

/// Empirical CDF at the sorted sample points: pairs (x_(i), i/n).
inline std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out.emplace_back(x[i], (static_cast<double>(i) + 1.0) / static_cast<double>(x.size()));
    return out;
}

}  // namespace sphlev
