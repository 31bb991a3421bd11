#pragma once

/// \file field_synthesis.hpp
/// Karhunen-Loeve synthesis of Z(x, t_k) and its orthonormal-frame gradient
/// from a coefficient ensemble, evaluated on a fixed point set.

#include "sphlev/geometry.hpp"
#include "sphlev/special_functions.hpp"
#include "sphlev/sphere_mesh.hpp"
#include "sphlev/time_processes.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sphlev {

struct FieldSlice {
    int k = 0;
    std::vector<double> values;
    std::vector<double> grad1;  ///< d/dtheta; empty when gradients were not requested
    std::vector<double> grad2;  ///< (1/sin theta) d/dphi
};

using Matrix = Eigen::MatrixXd;

/// Harmonic values and frame derivatives at every point for a given layout.
/// Matrices are points x harmonics, so a block of slices is one GEMM.
class HarmonicBasis {
public:
    HarmonicBasis(const std::vector<Vec3>& points, const std::vector<HarmonicIndex>& layout) : layout_(layout) {
        int lmax = 0;
        for (const auto& h : layout_) lmax = std::max(lmax, h.ell);
        const auto np = static_cast<Eigen::Index>(points.size());
        const auto nh = static_cast<Eigen::Index>(layout_.size());
        y_.resize(np, nh);
        d1_.resize(np, nh);
        d2_.resize(np, nh);
        AssociatedLegendreTable table(lmax);
        for (Eigen::Index i = 0; i < np; ++i) {
            const auto sc = to_spherical(points[static_cast<std::size_t>(i)]);
            table.evaluate(sc.theta);
            for (Eigen::Index h = 0; h < nh; ++h) {
                const auto& hi = layout_[static_cast<std::size_t>(h)];
                const auto v = real_harmonic_from_table(table, hi.ell, hi.m, sc.phi);
                y_(i, h) = v.value;
                d1_(i, h) = v.d1;
                d2_(i, h) = v.d2;
            }
        }
    }

    HarmonicBasis(const SphereMesh& mesh, const std::vector<HarmonicIndex>& layout)
        : HarmonicBasis(mesh.vertices, layout) {}

    const std::vector<HarmonicIndex>& layout() const { return layout_; }
    Eigen::Index points() const { return y_.rows(); }
    const Matrix& values() const { return y_; }
    const Matrix& d1() const { return d1_; }
    const Matrix& d2() const { return d2_; }

    /// Column range [first, first + count) holding multipole ell.
    std::pair<Eigen::Index, Eigen::Index> columns_of(int ell) const {
        Eigen::Index first = -1, count = 0;
        for (std::size_t h = 0; h < layout_.size(); ++h)
            if (layout_[h].ell == ell) {
                if (first < 0) first = static_cast<Eigen::Index>(h);
                ++count;
            }
        if (first < 0) throw std::invalid_argument("multipole l=" + std::to_string(ell) + " not in spectrum");
        return {first, count};
    }

private:
    std::vector<HarmonicIndex> layout_;
    Matrix y_, d1_, d2_;
};

/// Synthesizes slices of one ensemble on the basis points.
class FieldSynthesizer {
public:
    explicit FieldSynthesizer(const HarmonicBasis& basis) : basis_(basis) {}

    /// Coefficients of slices [k0, k0 + count) as a harmonics x count matrix.
    static Matrix coefficient_block(const CoefficientEnsemble& e, int k0, int count) {
        check_range(e, k0, count);
        const auto nh = static_cast<Eigen::Index>(e.harmonic_count());
        Matrix a(nh, count);
        for (int c = 0; c < count; ++c) {
            const auto s = e.slice(k0 + c);
            for (Eigen::Index h = 0; h < nh; ++h) a(h, c) = s[static_cast<std::size_t>(h)];
        }
        return a;
    }

    /// Z on all points for slices [k0, k0 + count): points x count.
    Matrix values_block(const CoefficientEnsemble& e, int k0, int count) const {
        check_layout(e);
        return basis_.values() * coefficient_block(e, k0, count);
    }

    void gradient_block(const CoefficientEnsemble& e, int k0, int count, Matrix& g1, Matrix& g2) const {
        check_layout(e);
        const Matrix a = coefficient_block(e, k0, count);
        g1.noalias() = basis_.d1() * a;
        g2.noalias() = basis_.d2() * a;
    }

    FieldSlice slice(const CoefficientEnsemble& e, int k, bool with_gradient = true) const {
        check_layout(e);
        check_range(e, k, 1);
        const auto s = e.slice(k);
        const Eigen::Map<const Eigen::VectorXd> a(s.data(), static_cast<Eigen::Index>(s.size()));
        FieldSlice out;
        out.k = k;
        out.values = to_std(basis_.values() * a);
        if (with_gradient) {
            out.grad1 = to_std(basis_.d1() * a);
            out.grad2 = to_std(basis_.d2() * a);
        }
        return out;
    }

    /// Z_ell alone; when `normalized`, divided by sqrt((2l+1) C_l(0) / 4pi).
    FieldSlice multipole_slice(const CoefficientEnsemble& e, int ell, int k, bool normalized = false,
                               bool with_gradient = true) const {
        check_layout(e);
        check_range(e, k, 1);
        const auto* entry = e.spectrum().find(ell);
        if (!entry) throw std::invalid_argument("multipole l=" + std::to_string(ell) + " not in spectrum");
        const auto [first, count] = basis_.columns_of(ell);
        const auto s = e.slice(k);
        const Eigen::Map<const Eigen::VectorXd> a(s.data() + first, count);
        double scale = 1.0;
        if (normalized) {
            const double var = (2.0 * ell + 1.0) * entry->c0 / kFourPi;
            if (!(var > 0.0)) throw std::domain_error("normalized multipole with c0 = 0");
            scale = 1.0 / std::sqrt(var);
        }
        FieldSlice out;
        out.k = k;
        out.values = to_std(scale * (basis_.values().middleCols(first, count) * a));
        if (with_gradient) {
            out.grad1 = to_std(scale * (basis_.d1().middleCols(first, count) * a));
            out.grad2 = to_std(scale * (basis_.d2().middleCols(first, count) * a));
        }
        return out;
    }

    const HarmonicBasis& basis() const { return basis_; }

private:
    static std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

    static void check_range(const CoefficientEnsemble& e, int k0, int count) {
        if (k0 < 0 || count < 0 || k0 + count > e.steps()) throw std::out_of_range("time index outside the grid");
    }

    void check_layout(const CoefficientEnsemble& e) const {
        const auto& a = e.layout();
        const auto& b = basis_.layout();
        bool same = a.size() == b.size();
        for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i].ell == b[i].ell && a[i].m == b[i].m;
        if (!same) throw std::invalid_argument("ensemble harmonic layout does not match the basis");
    }

    const HarmonicBasis& basis_;
};

inline FieldSlice synthesize_slice(const CoefficientEnsemble& e, const SphereMesh& mesh, int k) {
    const HarmonicBasis basis(mesh, e.layout());
    return FieldSynthesizer(basis).slice(e, k);
}

inline FieldSlice synthesize_multipole_slice(const CoefficientEnsemble& e, const SphereMesh& mesh, int ell, int k,
                                             bool normalized = false) {
    const HarmonicBasis basis(mesh, e.layout());
    return FieldSynthesizer(basis).multipole_slice(e, ell, k, normalized);
}

}  // namespace sphlev
