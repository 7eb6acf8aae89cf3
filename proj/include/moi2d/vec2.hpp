#pragma once

#include <cmath>

namespace moi2d {

/// 2-vector with plain value semantics. Everything in this library is
/// closed-form 2D, so no general linear-algebra dependency is used.
struct Vec2 {
    double x1 = 0.0;
    double x2 = 0.0;

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x1 + b.x1, a.x2 + b.x2}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x1 - b.x1, a.x2 - b.x2}; }
    friend constexpr Vec2 operator*(double c, Vec2 v) { return {c * v.x1, c * v.x2}; }
    friend constexpr Vec2 operator*(Vec2 v, double c) { return c * v; }
    friend constexpr bool operator==(Vec2 a, Vec2 b) { return a.x1 == b.x1 && a.x2 == b.x2; }
};

inline constexpr double dot(Vec2 a, Vec2 b) { return a.x1 * b.x1 + a.x2 * b.x2; }
inline double norm(Vec2 v) { return std::hypot(v.x1, v.x2); }

/// 2x2 matrix, row-major.
struct Mat2 {
    double a11 = 0.0, a12 = 0.0;
    double a21 = 0.0, a22 = 0.0;

    static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }

    constexpr double det() const { return a11 * a22 - a12 * a21; }
    constexpr Mat2 transpose() const { return {a11, a21, a12, a22}; }

    Mat2 inverse() const {
        const double d = det();
        return {a22 / d, -a12 / d, -a21 / d, a11 / d};
    }

    friend constexpr Vec2 operator*(const Mat2& m, Vec2 v) {
        return {m.a11 * v.x1 + m.a12 * v.x2, m.a21 * v.x1 + m.a22 * v.x2};
    }
    friend constexpr Mat2 operator*(const Mat2& a, const Mat2& b) {
        return {a.a11 * b.a11 + a.a12 * b.a21, a.a11 * b.a12 + a.a12 * b.a22,
                a.a21 * b.a11 + a.a22 * b.a21, a.a21 * b.a12 + a.a22 * b.a22};
    }
    friend constexpr Mat2 operator-(const Mat2& a, const Mat2& b) {
        return {a.a11 - b.a11, a.a12 - b.a12, a.a21 - b.a21, a.a22 - b.a22};
    }
};

/// Quadratic form v' M v for symmetric M.
inline constexpr double quad_form(const Mat2& m, Vec2 v) {
    return m.a11 * v.x1 * v.x1 + (m.a12 + m.a21) * v.x1 * v.x2 + m.a22 * v.x2 * v.x2;
}

inline double max_abs_entry(const Mat2& m) {
    return std::max(std::max(std::fabs(m.a11), std::fabs(m.a12)),
                    std::max(std::fabs(m.a21), std::fabs(m.a22)));
}

} // namespace moi2d
