#pragma once

#include <cmath>

namespace afem {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
/// Rotate by +90 degrees.
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

/// Edge midpoint. Refinement and overlay must agree bitwise on midpoint
/// coordinates, so both go through this one function.
inline Vec2 midpoint(Vec2 a, Vec2 b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }

struct Mat2 {
    double a00 = 1.0, a01 = 0.0;
    double a10 = 0.0, a11 = 1.0;
};

inline Vec2 apply(const Mat2& m, Vec2 v) {
    return {m.a00 * v.x + m.a01 * v.y, m.a10 * v.x + m.a11 * v.y};
}

}  // namespace afem
