#pragma once

/// \file geometry.hpp
/// Small fixed-size vector helpers for points on the unit sphere.

#include <array>
#include <cmath>
#include <stdexcept>

namespace sphlev {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return {a[0] / n, a[1] / n, a[2] / n};
}

/// Great-circle distance between unit vectors (robust for tiny and near-pi angles).
inline double arc_length(const Vec3& a, const Vec3& b) { return std::atan2(norm(cross(a, b)), dot(a, b)); }

inline Vec3 mat_vec(const Mat3& r, const Vec3& v) {
    return {dot(r[0], v), dot(r[1], v), dot(r[2], v)};
}

inline Mat3 transpose(const Mat3& m) {
    Mat3 t{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = m[j][i];
    return t;
}

/// Rotation by `angle` about `axis` (Rodrigues).
inline Mat3 rotation_matrix(const Vec3& axis, double angle) {
    const Vec3 k = normalized(axis);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double v = 1.0 - c;
    return {{{c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s},
             {k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s},
             {k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v}}};
}

/// Colatitude theta in [0, pi] and longitude phi in (-pi, pi].
struct SphericalCoord {
    double theta = 0.0;
    double phi = 0.0;
};

inline SphericalCoord to_spherical(const Vec3& x) {
    const double rho = std::hypot(x[0], x[1]);
    return {std::atan2(rho, x[2]), std::atan2(x[1], x[0])};
}

inline Vec3 to_cartesian(const SphericalCoord& c) {
    const double s = std::sin(c.theta);
    return {s * std::cos(c.phi), s * std::sin(c.phi), std::cos(c.theta)};
}

/// Orthonormal tangent frame (e_theta, e_phi) at a point off the poles.
struct TangentFrame {
    Vec3 e_theta;
    Vec3 e_phi;
};

inline TangentFrame tangent_frame(const SphericalCoord& c) {
    const double st = std::sin(c.theta), ct = std::cos(c.theta);
    const double sp = std::sin(c.phi), cp = std::cos(c.phi);
    return {{ct * cp, ct * sp, -st}, {-sp, cp, 0.0}};
}

}  // namespace sphlev
