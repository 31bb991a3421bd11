#pragma once

/// \file level_geometry.hpp
/// Marching-triangles level curves on the sphere mesh, their geodesic length,
/// the epsilon-band approximation and the time-integrated functional C_T(u).

#include "sphlev/covariance_model.hpp"
#include "sphlev/field_synthesis.hpp"
#include "sphlev/sphere_mesh.hpp"
#include "sphlev/time_processes.hpp"

#include <array>
#include <cmath>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sphlev {

/// Offset added to vertex values that hit the level exactly (sigma0 = 1).
inline constexpr double kExactHitOffset = 1e-12;

struct LevelSegment {
    Vec3 a;
    Vec3 b;
    std::array<int, 2> edge_a;  ///< mesh edge (vertex ids) carrying endpoint a
    std::array<int, 2> edge_b;
};

struct LevelCurveSet {
    std::vector<LevelSegment> segments;
    double total_length = 0.0;
    double u = 0.0;
    int k = 0;
    int perturbed_vertices = 0;
};

namespace detail {

inline double shifted(double value, double u, int& perturbed) {
    const double v = value - u;
    if (v == 0.0) {
        ++perturbed;
        return kExactHitOffset;
    }
    return v;
}

inline Vec3 edge_crossing(const Vec3& a, const Vec3& b, double va, double vb) {
    const double t = va / (va - vb);
    return normalized(a + t * (b - a));
}

/// The triangle's two crossing points, or false when its vertices do not straddle 0.
inline bool triangle_crossings(const std::array<Vec3, 3>& p, const std::array<double, 3>& v,
                               std::array<Vec3, 2>& out, std::array<std::array<int, 2>, 2>& edges) {
    const bool s0 = v[0] > 0.0, s1 = v[1] > 0.0, s2 = v[2] > 0.0;
    if (s0 == s1 && s1 == s2) return false;
    int n = 0;
    constexpr int e[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    for (const auto& ed : e) {
        const int i = ed[0], j = ed[1];
        if ((v[static_cast<std::size_t>(i)] > 0.0) != (v[static_cast<std::size_t>(j)] > 0.0)) {
            out[static_cast<std::size_t>(n)] = edge_crossing(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)],
                                                             v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
            edges[static_cast<std::size_t>(n)] = {i, j};
            ++n;
        }
    }
    return n == 2;
}

}  // namespace detail

inline LevelCurveSet extract_level_curves(std::span<const double> values, const SphereMesh& mesh, double u, int k = 0) {
    if (values.size() != mesh.vertices.size()) throw std::invalid_argument("slice does not match the mesh");
    LevelCurveSet out;
    out.u = u;
    out.k = k;
    std::vector<double> v(values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::shifted(values[i], u, out.perturbed_vertices);
    std::array<Vec3, 2> cr;
    std::array<std::array<int, 2>, 2> ce;
    for (const auto& t : mesh.triangles) {
        const std::array<double, 3> tv{v[static_cast<std::size_t>(t[0])], v[static_cast<std::size_t>(t[1])],
                                       v[static_cast<std::size_t>(t[2])]};
        const std::array<Vec3, 3> tp{mesh.vertices[static_cast<std::size_t>(t[0])],
                                     mesh.vertices[static_cast<std::size_t>(t[1])],
                                     mesh.vertices[static_cast<std::size_t>(t[2])]};
        if (!detail::triangle_crossings(tp, tv, cr, ce)) continue;
        LevelSegment seg{cr[0], cr[1], {t[static_cast<std::size_t>(ce[0][0])], t[static_cast<std::size_t>(ce[0][1])]},
                         {t[static_cast<std::size_t>(ce[1][0])], t[static_cast<std::size_t>(ce[1][1])]}};
        out.total_length += arc_length(seg.a, seg.b);
        out.segments.push_back(seg);
    }
    return out;
}

inline LevelCurveSet extract_level_curves(const FieldSlice& slice, const SphereMesh& mesh, double u) {
    return extract_level_curves(slice.values, mesh, u, slice.k);
}

/// Total level-curve lengths for several levels in one pass over the
/// triangles; no segments are stored. `perturbed` accumulates exact hits.
inline void level_lengths(std::span<const double> values, const SphereMesh& mesh, std::span<const double> us,
                          std::span<double> lengths, int* perturbed = nullptr) {
    if (values.size() != mesh.vertices.size()) throw std::invalid_argument("slice does not match the mesh");
    if (lengths.size() != us.size()) throw std::invalid_argument("level_lengths: size mismatch");
    std::fill(lengths.begin(), lengths.end(), 0.0);
    int hits = 0;
    std::array<Vec3, 2> cr;
    std::array<std::array<int, 2>, 2> ce;
    for (const auto& t : mesh.triangles) {
        const double a = values[static_cast<std::size_t>(t[0])];
        const double b = values[static_cast<std::size_t>(t[1])];
        const double c = values[static_cast<std::size_t>(t[2])];
        const double lo = std::min({a, b, c});
        const double hi = std::max({a, b, c});
        for (std::size_t j = 0; j < us.size(); ++j) {
            const double u = us[j];
            if (u < lo || u > hi) continue;
            if (a == u || b == u || c == u) ++hits;
            const std::array<double, 3> tv{a == u ? kExactHitOffset : a - u, b == u ? kExactHitOffset : b - u,
                                           c == u ? kExactHitOffset : c - u};
            const std::array<Vec3, 3> tp{mesh.vertices[static_cast<std::size_t>(t[0])],
                                         mesh.vertices[static_cast<std::size_t>(t[1])],
                                         mesh.vertices[static_cast<std::size_t>(t[2])]};
            if (detail::triangle_crossings(tp, tv, cr, ce)) lengths[j] += arc_length(cr[0], cr[1]);
        }
    }
    if (perturbed) *perturbed += hits;
}

inline double kac_rice_mean(const PowerSpectrum& s, double u) {
    return std::sqrt(sigma1_sq(s)) * 2.0 * kPi * std::exp(-0.5 * u * u);
}

/// (1/2 eps) sum_i w_i 1[|Z_i - u| <= eps] |grad Z_i|.
inline double epsilon_length(const FieldSlice& slice, const SphereMesh& mesh, double u, double epsilon) {
    if (!(epsilon > 0.0)) throw std::domain_error("epsilon_length: epsilon must be > 0");
    if (slice.grad1.size() != slice.values.size() || slice.grad2.size() != slice.values.size())
        throw std::invalid_argument("epsilon_length: slice has no gradient");
    if (slice.values.size() != mesh.vertices.size()) throw std::invalid_argument("slice does not match the mesh");
    double s = 0.0;
    for (std::size_t i = 0; i < slice.values.size(); ++i)
        if (std::abs(slice.values[i] - u) <= epsilon)
            s += mesh.vertex_weights[i] * std::hypot(slice.grad1[i], slice.grad2[i]);
    return s / (2.0 * epsilon);
}

struct BoundaryFunctionalSample {
    double u = 0.0;
    double horizon = 0.0;
    double raw_integral = 0.0;  ///< int_0^T L_u(t) dt (trapezoid)
    double centered = 0.0;      ///< raw_integral - T * E[L_u]
    std::vector<double> per_step_lengths;
    int perturbed_vertices = 0;
};

/// C_T(u) for several levels from one ensemble. Slices are synthesized in
/// blocks of `block` time steps.
inline std::vector<BoundaryFunctionalSample> boundary_functionals(const CoefficientEnsemble& e,
                                                                  const FieldSynthesizer& synth, const SphereMesh& mesh,
                                                                  std::span<const double> us, int block = 64) {
    if (synth.basis().points() != static_cast<Eigen::Index>(mesh.vertices.size()))
        throw std::invalid_argument("synthesizer points do not match the mesh");
    const int n = e.steps();
    std::vector<BoundaryFunctionalSample> out(us.size());
    for (std::size_t j = 0; j < us.size(); ++j) {
        out[j].u = us[j];
        out[j].horizon = e.grid().horizon();
        out[j].per_step_lengths.assign(static_cast<std::size_t>(n), 0.0);
    }
    std::vector<double> len(us.size());
    int hits = 0;
    for (int k0 = 0; k0 < n; k0 += block) {
        const int cnt = std::min(block, n - k0);
        const Matrix z = synth.values_block(e, k0, cnt);
        for (int c = 0; c < cnt; ++c) {
            level_lengths({z.col(c).data(), static_cast<std::size_t>(z.rows())}, mesh, us, len, &hits);
            for (std::size_t j = 0; j < us.size(); ++j) out[j].per_step_lengths[static_cast<std::size_t>(k0 + c)] = len[j];
        }
    }
    for (std::size_t j = 0; j < us.size(); ++j) {
        auto& s = out[j];
        s.raw_integral = trapezoid(s.per_step_lengths, e.grid().dt);
        s.centered = s.raw_integral - s.horizon * kac_rice_mean(e.spectrum(), s.u);
        s.perturbed_vertices = hits;
    }
    return out;
}

inline BoundaryFunctionalSample boundary_functional(const CoefficientEnsemble& e, const SphereMesh& mesh, double u) {
    const HarmonicBasis basis(mesh, e.layout());
    const FieldSynthesizer synth(basis);
    const double us[1] = {u};
    return std::move(boundary_functionals(e, synth, mesh, us).front());
}

/// Per-replicate CSV rows: replicate,k,t,L_u.
inline void write_length_csv(std::ostream& os, int replicate, const BoundaryFunctionalSample& s, const TimeGrid& g,
                             bool header) {
    if (header) os << "replicate,k,t,L_u\n";
    for (std::size_t k = 0; k < s.per_step_lengths.size(); ++k)
        os << replicate << ',' << k << ',' << format_double(g.time(static_cast<int>(k))) << ','
           << format_double(s.per_step_lengths[k]) << '\n';
}

}  // namespace sphlev
