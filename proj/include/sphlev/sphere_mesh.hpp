#pragma once

/// \file sphere_mesh.hpp
/// Icosphere triangulation of S^2 with per-vertex area weights.

#include "sphlev/geometry.hpp"
#include "sphlev/special_functions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sphlev {

using Triangle = std::array<int, 3>;

struct SphereMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;  ///< counter-clockwise seen from outside
    std::vector<double> vertex_weights;
    int subdivision_level = 0;

    std::size_t vertex_count() const { return vertices.size(); }
};

/// Area of the spherical triangle with unit-vector corners (Van Oosterom-Strackee).
inline double spherical_triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    const double num = std::abs(dot(a, cross(b, c)));
    const double den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    return 2.0 * std::atan2(num, den);
}

/// Fixed rotation applied to every icosphere so that no vertex lands on a pole.
inline Mat3 icosphere_rotation() { return rotation_matrix({0.31, -0.57, 0.76}, 0.4137); }

namespace detail {

inline void icosahedron(std::vector<Vec3>& v, std::vector<Triangle>& t) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
         {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    for (auto& x : v) x = normalized(x);
    t = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
}

}  // namespace detail

inline SphereMesh build_icosphere(int level) {
    if (level < 0 || level > 8) throw std::domain_error("icosphere level must lie in [0, 8]");
    SphereMesh mesh;
    mesh.subdivision_level = level;
    detail::icosahedron(mesh.vertices, mesh.triangles);
    for (int s = 0; s < level; ++s) {
        std::unordered_map<std::uint64_t, int> midpoint;
        midpoint.reserve(mesh.triangles.size() * 2);
        auto mid = [&](int a, int b) {
            const auto lo = static_cast<std::uint64_t>(std::min(a, b));
            const auto hi = static_cast<std::uint64_t>(std::max(a, b));
            const auto key = (lo << 32) | hi;
            if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(mesh.vertices.size());
            mesh.vertices.push_back(normalized(mesh.vertices[static_cast<std::size_t>(a)] +
                                               mesh.vertices[static_cast<std::size_t>(b)]));
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Triangle> next;
        next.reserve(mesh.triangles.size() * 4);
        for (const auto& t : mesh.triangles) {
            const int ab = mid(t[0], t[1]);
            const int bc = mid(t[1], t[2]);
            const int ca = mid(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        mesh.triangles = std::move(next);
    }
    const Mat3 r = icosphere_rotation();
    for (auto& x : mesh.vertices) x = normalized(mat_vec(r, x));
    for (const auto& x : mesh.vertices)
        if (std::hypot(x[0], x[1]) < 1e-6)
            throw std::logic_error("icosphere: vertex at a pole at level " + std::to_string(level));

    mesh.vertex_weights.assign(mesh.vertices.size(), 0.0);
    for (const auto& t : mesh.triangles) {
        const auto& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const auto& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const auto& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        const double w = spherical_triangle_area(a, b, c) / 3.0;
        for (const int i : t) mesh.vertex_weights[static_cast<std::size_t>(i)] += w;
    }
    return mesh;
}

/// Sum_i w_i f(x_i).
template <class Values>
double mesh_integral(const SphereMesh& mesh, const Values& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) s += mesh.vertex_weights[i] * f[i];
    return s;
}

/// Longest great-circle edge length, an upper bound on the mesh spacing.
inline double max_edge_length(const SphereMesh& mesh) {
    double h = 0.0;
    for (const auto& t : mesh.triangles)
        for (int j = 0; j < 3; ++j)
            h = std::max(h, arc_length(mesh.vertices[static_cast<std::size_t>(t[j])],
                                       mesh.vertices[static_cast<std::size_t>(t[(j + 1) % 3])]));
    return h;
}

}  // namespace sphlev
