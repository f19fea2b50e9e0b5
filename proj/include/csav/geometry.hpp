#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace csav {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(Vec2 a, double k) { return {a.x * k, a.y * k}; }
    friend Vec2 operator*(double k, Vec2 a) { return {a.x * k, a.y * k}; }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }
// 90 degrees counter-clockwise.
inline Vec2 left_normal(Vec2 u) { return {-u.y, u.x}; }
inline Vec2 rotate(Vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a <= 0.0) a += two_pi;
    return a - std::numbers::pi;
}

inline double angle_diff(double a, double b) { return wrap_angle(a - b); }
inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

// Axis-aligned box, min corner (x1, y1) and max corner (x2, y2).
struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    Vec2 center() const { return {(x1 + x2) / 2.0, (y1 + y2) / 2.0}; }
    double area() const { return (x2 - x1) * (y2 - y1); }
    bool contains(Vec2 p) const { return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2; }
    bool overlaps(const Box& o) const { return x1 <= o.x2 && o.x1 <= x2 && y1 <= o.y2 && o.y1 <= y2; }
    Box inflated(double m) const { return {x1 - m, y1 - m, x2 + m, y2 + m}; }
    friend bool operator==(const Box&, const Box&) = default;
};

inline Box bounding_box(Vec2 a, Vec2 b) {
    return {std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y)};
}

inline Box expand(Box b, Vec2 p) {
    return {std::min(b.x1, p.x), std::min(b.y1, p.y), std::max(b.x2, p.x), std::max(b.y2, p.y)};
}

// Axis-aligned bounds of a length x width rectangle centred at c with the given heading.
inline Box oriented_bounds(Vec2 c, double heading, double length, double width) {
    const Vec2 u = unit(heading);
    const Vec2 n = left_normal(u);
    const double hx = std::abs(u.x) * length / 2.0 + std::abs(n.x) * width / 2.0;
    const double hy = std::abs(u.y) * length / 2.0 + std::abs(n.y) * width / 2.0;
    return {c.x - hx, c.y - hy, c.x + hx, c.y + hy};
}

inline double box_distance(const Box& b, Vec2 p) {
    const double dx = std::max({b.x1 - p.x, 0.0, p.x - b.x2});
    const double dy = std::max({b.y1 - p.y, 0.0, p.y - b.y2});
    return std::hypot(dx, dy);
}

inline double box_distance(const Box& a, const Box& b) {
    const double dx = std::max({a.x1 - b.x2, 0.0, b.x1 - a.x2});
    const double dy = std::max({a.y1 - b.y2, 0.0, b.y1 - a.y2});
    return std::hypot(dx, dy);
}

// Slab test: does the closed segment [a, b] touch the box?
inline bool segment_intersects_box(Vec2 a, Vec2 b, const Box& box) {
    double t0 = 0.0, t1 = 1.0;
    const Vec2 d = b - a;
    const double p[4] = {-d.x, d.x, -d.y, d.y};
    const double q[4] = {a.x - box.x1, box.x2 - a.x, a.y - box.y1, box.y2 - a.y};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
            continue;
        }
        const double r = q[i] / p[i];
        if (p[i] < 0.0) {
            if (r > t1) return false;
            t0 = std::max(t0, r);
        } else {
            if (r < t0) return false;
            t1 = std::min(t1, r);
        }
    }
    return t0 <= t1;
}

} // namespace csav
