#include "sphlev/covariance_model.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>

using namespace sphlev;

namespace {

PowerSpectrum three_pole() {
    return PowerSpectrum::create({{0, 1.0, 1.0, 2.0}, {2, 0.6, 0.3}, {4, 0.25, 1.0, 3.0}});
}

// Independent covariance: Gamma from std::legendre.
double gamma_ref(const PowerSpectrum& s, double eta, double tau) {
    double v = 0.0;
    for (const auto& e : s.entries())
        v += (2 * e.ell + 1) / kFourPi * e.c0 * std::pow(1 + std::abs(tau), -e.decay()) * std::legendre(e.ell, eta);
    return v;
}

}  // namespace

TEST(Kernel, PowerLawValues) {
    EXPECT_DOUBLE_EQ(g_beta(0.3, 2.0, 0.0), 1.0);
    EXPECT_NEAR(g_beta(0.3, 2.0, 3.0), std::pow(4.0, -0.3), 1e-15);
    EXPECT_NEAR(g_beta(0.3, 2.0, -3.0), std::pow(4.0, -0.3), 1e-15);
    EXPECT_NEAR(g_beta(1.0, 2.5, 1.0), std::pow(2.0, -2.5), 1e-15);
    EXPECT_THROW(g_beta(1.5, 2.0, 1.0), std::domain_error);
    EXPECT_THROW(g_beta(0.0, 2.0, 1.0), std::domain_error);
    EXPECT_THROW(g_beta(1.0, 1.5, 1.0), std::domain_error);
}

TEST(Spectrum, NormalizesToUnitVariance) {
    const auto s = three_pole();
    EXPECT_NEAR(s.variance(), 1.0, 1e-14);
    EXPECT_NEAR(space_time_cov(s, 1.0, 0.0), 1.0, 1e-13);
    EXPECT_EQ(s.harmonic_count(), 1 + 5 + 9);
    EXPECT_EQ(s.ell_max(), 4);
    EXPECT_EQ(s.support(), (std::vector<int>{0, 2, 4}));
    EXPECT_EQ(s.cov(3, 0.0), 0.0);
}

TEST(Spectrum, RejectsInvalidInput) {
    using E = std::vector<MultipoleEntry>;
    EXPECT_THROW(PowerSpectrum::create(E{}), std::invalid_argument);
    EXPECT_THROW(PowerSpectrum::create(E{{0, 1, 1.5}}), std::domain_error);
    EXPECT_THROW(PowerSpectrum::create(E{{0, 1, 1.0, 1.5}}), std::domain_error);
    EXPECT_THROW(PowerSpectrum::create(E{{0, -1, 1.0}}), std::domain_error);
    EXPECT_THROW(PowerSpectrum::create(E{{0, 1, 1.0}, {0, 1, 1.0}}), std::invalid_argument);
    EXPECT_THROW(PowerSpectrum::create(E{{2, 1, 0.3}}), std::invalid_argument);  // no l = 0
    EXPECT_THROW(PowerSpectrum::create(E{{0, 2.0, 1.0}}, {false, true}), std::invalid_argument);
    EXPECT_NO_THROW(PowerSpectrum::create(E{{2, 1, 0.3}}, {true, false}));
    try {
        PowerSpectrum::create(E{{0, 1, 1.5}});
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("beta must lie in (0,1]"), std::string::npos);
    }
}

TEST(Spectrum, GammaMatchesStdLegendreSum) {
    const auto s = three_pole();
    for (double eta : {-1.0, -0.3, 0.2, 0.95})
        for (double tau : {0.0, 1.5, -7.0}) EXPECT_NEAR(space_time_cov(s, eta, tau), gamma_ref(s, eta, tau), 1e-13);
}

TEST(Spectrum, GammaDerivativesMatchFiniteDifferences) {
    const auto s = three_pole();
    const double h = 1e-5;
    for (double eta : {-0.7, 0.1, 0.6}) {
        const auto d = space_time_cov_derivs(s, eta, 2.0);
        EXPECT_NEAR(d.d1, (gamma_ref(s, eta + h, 2.0) - gamma_ref(s, eta - h, 2.0)) / (2 * h), 1e-7);
        EXPECT_NEAR(d.d2,
                    (space_time_cov_derivs(s, eta + h, 2.0).d1 - space_time_cov_derivs(s, eta - h, 2.0).d1) / (2 * h),
                    1e-6);
    }
}

TEST(Spectrum, EnvelopeHook) {
    const auto s = three_pole().with_envelope(2, [](double t) { return 1.0 + 0.5 * std::abs(t) * std::exp(-std::abs(t)); });
    EXPECT_TRUE(s.has_envelope(2));
    EXPECT_FALSE(s.has_envelope(0));
    EXPECT_NEAR(s.cov(2, 1.0), three_pole().cov(2, 1.0) * (1 + 0.5 * std::exp(-1.0)), 1e-15);
    EXPECT_DOUBLE_EQ(s.cov(2, 0.0), three_pole().cov(2, 0.0));
    EXPECT_THROW(three_pole().with_envelope(3, [](double) { return 1.0; }), std::invalid_argument);
}

TEST(GradientCovariance, MatchesFiniteDifferencesOfGamma) {
    const auto s = three_pole();
    const SphericalCoord x{0.9, 0.4}, y{1.6, 1.1};
    const double tau = 1.3, h = 1e-5;
    auto G = [&](SphericalCoord a, SphericalCoord b) {
        return gamma_ref(s, dot(to_cartesian(a), to_cartesian(b)), tau);
    };
    // Frame derivatives: d/dtheta and (1/sin theta) d/dphi.
    auto dx = [&](int a, auto f, SphericalCoord p) {
        SphericalCoord lo = p, hi = p;
        if (a == 0) { lo.theta -= h; hi.theta += h; }
        else { lo.phi -= h; hi.phi += h; }
        return (f(hi) - f(lo)) / (2 * h) / (a == 0 ? 1.0 : std::sin(p.theta));
    };
    const auto m = grad_cov_matrix(s, x, y, tau);
    EXPECT_NEAR(m[0][0], G(x, y), 1e-13);
    for (int a = 0; a < 2; ++a) {
        EXPECT_NEAR(m[a + 1][0], dx(a, [&](SphericalCoord p) { return G(p, y); }, x), 1e-7);
        EXPECT_NEAR(m[0][a + 1], dx(a, [&](SphericalCoord p) { return G(x, p); }, y), 1e-7);
        for (int b = 0; b < 2; ++b) {
            const double fd = dx(a, [&](SphericalCoord p) { return dx(b, [&](SphericalCoord q) { return G(p, q); }, y); }, x);
            EXPECT_NEAR(m[a + 1][b + 1], fd, 1e-5) << a << b;
        }
    }
}

TEST(GradientCovariance, MatchesHarmonicExpansion) {
    // Cov(dZ(x,t), dZ(y,s)) = sum_l C_l(tau) sum_m dY_lm(x) dY_lm(y).
    const auto s = three_pole();
    const SphericalCoord x{0.5, 2.0}, y{2.2, -1.0};
    const double tau = 0.7;
    const auto m = grad_cov_matrix(s, x, y, tau);
    double ref[3][3] = {};
    for (const auto& e : s.entries())
        for (int mm = -e.ell; mm <= e.ell; ++mm) {
            const auto hx = real_spherical_harmonic_with_gradient(e.ell, mm, x.theta, x.phi);
            const auto hy = real_spherical_harmonic_with_gradient(e.ell, mm, y.theta, y.phi);
            const double vx[3] = {hx.value, hx.d1, hx.d2}, vy[3] = {hy.value, hy.d1, hy.d2};
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) ref[a][b] += s.cov(e.ell, tau) * vx[a] * vy[b];
        }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) EXPECT_NEAR(m[a][b], ref[a][b], 1e-12);
}

TEST(GradientCovariance, DiagonalIsSigma1Squared) {
    const auto s = three_pole();
    const SphericalCoord x{1.1, 0.3};
    const auto m = grad_cov_matrix(s, x, x, 0.0);
    const double s1 = sigma1_sq(s);
    EXPECT_NEAR(m[1][1], s1, 1e-12);
    EXPECT_NEAR(m[2][2], s1, 1e-12);
    EXPECT_NEAR(m[1][2], 0.0, 1e-12);
    EXPECT_NEAR(m[0][1], 0.0, 1e-12);
    // sigma1^2 = -Gamma'(1) up to normalization: Gamma'(1) = sum (2l+1)/(4pi) C l(l+1)/2.
    EXPECT_NEAR(s1, space_time_cov_derivs(s, 1.0, 0.0).d1, 1e-12);
    EXPECT_THROW(grad_cov_matrix(s, {0.0, 0.0}, x, 0.0), std::domain_error);
}

TEST(Regime, ClassifiesRepresentativeSpectra) {
    const auto lm = classify_regime(PowerSpectrum::create({{0, .2, 1, 2}, {1, .5, .2}, {2, .3, 1, 2}}));
    EXPECT_EQ(lm.regime, Regime::LongMemory);
    EXPECT_EQ(lm.i_star, std::vector<int>{1});
    EXPECT_EQ(lm.ell_star, 1);
    EXPECT_DOUBLE_EQ(lm.beta_star, 0.2);
    ASSERT_TRUE(lm.expected_var_exponent);
    EXPECT_NEAR(*lm.expected_var_exponent, 1.6, 1e-15);
    ASSERT_TRUE(lm.berry_levels);
    EXPECT_NEAR((*lm.berry_levels)[1], std::sqrt(1 - 2.0 / (2 * lm.sigma1_sq)), 1e-15);

    const auto two = classify_regime(PowerSpectrum::create({{0, .2, 1, 2}, {1, .5, .2}, {2, .3, .2}}));
    EXPECT_EQ(two.i_star, (std::vector<int>{1, 2}));
    EXPECT_FALSE(two.berry_levels);

    const auto sm = classify_regime(PowerSpectrum::create({{0, .2, 1, 2}, {1, .5, .7}, {3, .3, 1, 2}}));
    EXPECT_EQ(sm.regime, Regime::ShortMemory);
    EXPECT_NEAR(*sm.expected_var_exponent, 1.0, 0);

    // 2 beta* = beta_0: neither condition holds strictly.
    const auto bd = classify_regime(PowerSpectrum::create({{0, .2, .4}, {1, .5, .2}}));
    EXPECT_EQ(bd.regime, Regime::Boundary);
    EXPECT_FALSE(bd.expected_var_exponent);

    // l = 0 joins I* on a tie.
    const auto tie = classify_regime(PowerSpectrum::create({{0, .2, .2}, {3, .5, .2}}));
    EXPECT_EQ(tie.i_star, (std::vector<int>{0, 3}));
    EXPECT_EQ(tie.ell_star, 3);

    EXPECT_THROW(classify_regime(PowerSpectrum::create({{0, 1, 1}})), std::invalid_argument);
}

TEST(TimeIntegrals, ClosedFormsAgainstQuadrature) {
    const auto s = PowerSpectrum::create({{0, .2, 1, 2.5}, {1, .5, .2}, {2, .3, 0.8}});
    using boost::math::quadrature::gauss_kronrod;
    // int_R C^2 for the short-memory l = 0 entry.
    const double c0 = s.find(0)->c0;
    EXPECT_NEAR(integral_Csq_real_line(s, 0), 2 * c0 * c0 / (2 * 2.5 - 1), 1e-15);
    EXPECT_NEAR(integral_C_real_line(s, 0), 2 * c0 / (2.5 - 1), 1e-15);
    EXPECT_TRUE(std::isinf(integral_Csq_real_line(s, 1)));
    // Double integral: 2-D Riemann (midpoint) sum on [0,T]^2 as an independent oracle.
    const double T = 40.0;
    const int n = 1600;
    double riemann = 0.0;
    const double h = T / n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double c = s.cov(1, (i - j) * h);
            riemann += c * c * h * h;
        }
    EXPECT_NEAR(double_time_integral_Csq(s, 1, T).numeric / riemann, 1.0, 2e-3);
    const auto d = double_time_integral_Csq(s, 1, 1e6);
    ASSERT_TRUE(d.asymptotic);
    EXPECT_NEAR(*d.growth_exponent, 1.6, 1e-15);
    EXPECT_NEAR(d.numeric / *d.asymptotic, 1.0, 0.03);
    const auto sh = double_time_integral_Csq(s, 0, 1e5);
    EXPECT_NEAR(sh.numeric / *sh.asymptotic, 1.0, 1e-3);
    EXPECT_EQ(*sh.growth_exponent, 1.0);
    // Boundary 2 beta = 1: no leading-order prediction.
    const auto b = PowerSpectrum::create({{0, 1, 1}, {1, 1, 0.5}});
    EXPECT_FALSE(double_time_integral_Csq(b, 1, 100.0).asymptotic);
}

TEST(TimeIntegrals, EnvelopeTailBound) {
    const auto base = PowerSpectrum::create({{0, 1, 1, 3}, {1, 1, 1, 2}});
    const auto s = base.with_envelope(0, [](double) { return 1.0; });
    EXPECT_NEAR(integral_Csq_real_line(s, 0), integral_Csq_real_line(base, 0), 1e-9);
    EXPECT_NEAR(integral_C_real_line(s, 0), integral_C_real_line(base, 0), 1e-9);
}

TEST(SpectrumText, RoundTripAndErrors) {
    const auto s = three_pole();
    const auto back = parse_spectrum("normalize = false\n" + render_spectrum(s));
    EXPECT_EQ(back, s);
    EXPECT_EQ(spectrum_hash(back), spectrum_hash(s));
    EXPECT_THROW(parse_spectrum("[multipole]\nell = 0\nc0 = 1\nbeta = 1.5\n"), ConfigError);
    EXPECT_THROW(parse_spectrum("[multipole]\nell = 0\nc0 = 1\n"), ConfigError);
    EXPECT_THROW(parse_spectrum("[multipole]\nell = 0\nc0 = x\nbeta = 1\n"), ConfigError);
    EXPECT_THROW(parse_spectrum("[multipole]\nell = 0\nc0 = 1\nbeta = 1\ncolour = 2\n"), ConfigError);
    try {
        parse_spectrum("[multipole]\nell = 0\nc0 = 1\n\nbeta = 1.5\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "beta");
        EXPECT_EQ(e.line(), 5);
    }
}
