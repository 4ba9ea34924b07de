#pragma once

#include <algorithm>
#include <cmath>

namespace hyplan {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }

    double norm() const { return std::hypot(x, y); }
    double norm_sq() const { return x * x + y * y; }
};

inline double dist(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

// Axis-aligned rectangle, closed bounds.
struct Rect {
    double xmin = 0.0;
    double ymin = 0.0;
    double xmax = 0.0;
    double ymax = 0.0;

    bool contains(const Vec2& p) const {
        return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
    }
    Vec2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
};

// Wraps an angle into [0, 2*pi).
inline double normalize_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    if (a >= kTwoPi) a = 0.0;
    return a;
}

// True if the open segment a->b passes through the interior of r.
// Grazing contact with the boundary (corner or edge) does not block.
inline bool segment_crosses_rect(const Vec2& a, const Vec2& b, const Rect& r) {
    constexpr double eps = 1e-9;
    // Shrink the box so boundary contact is not an intersection.
    const double xmin = r.xmin + eps, xmax = r.xmax - eps;
    const double ymin = r.ymin + eps, ymax = r.ymax - eps;
    if (xmin >= xmax || ymin >= ymax) return false;

    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    double t0 = 0.0, t1 = 1.0;

    auto clip = [&](double p, double q) {
        // Half-plane p * t <= q.
        if (std::abs(p) < 1e-300) return q >= 0.0;
        const double t = q / p;
        if (p < 0.0) {
            if (t > t1) return false;
            if (t > t0) t0 = t;
        } else {
            if (t < t0) return false;
            if (t < t1) t1 = t;
        }
        return true;
    };

    if (!clip(-dx, a.x - xmin)) return false;
    if (!clip(dx, xmax - a.x)) return false;
    if (!clip(-dy, a.y - ymin)) return false;
    if (!clip(dy, ymax - a.y)) return false;

    // Open segment: require a real interval strictly inside (0, 1).
    return t1 > t0 && t1 > eps && t0 < 1.0 - eps;
}

}  // namespace hyplan
