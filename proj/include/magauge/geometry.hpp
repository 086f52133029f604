#pragma once

#include <array>
#include <cmath>
#include <complex>

namespace magauge {

using Complex = std::complex<double>;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr Vec2 operator-(const Vec2& a) { return {-a.x, -a.y}; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }
constexpr double norm2(const Vec2& a) { return dot(a, a); }

/// Twice the signed area of (a, b, c); positive when counterclockwise.
constexpr double signed_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return cross(b - a, c - a);
}

/// Affine map from the reference triangle (0,0),(1,0),(0,1) onto a physical
/// triangle. Stores the Jacobian, its determinant and the inverse transpose
/// used to push reference gradients forward.
struct AffineMap {
  Vec2 origin;
  std::array<double, 4> jac{};      // column-major [d x/d xi, d y/d xi, d x/d eta, d y/d eta]
  std::array<double, 4> inv_t{};    // (J^{-1})^T, same layout
  double det = 0.0;

  AffineMap() = default;
  AffineMap(const Vec2& p0, const Vec2& p1, const Vec2& p2) : origin(p0) {
    const Vec2 e1 = p1 - p0;
    const Vec2 e2 = p2 - p0;
    jac = {e1.x, e1.y, e2.x, e2.y};
    det = e1.x * e2.y - e2.x * e1.y;
    const double inv = 1.0 / det;
    // J^{-1} = inv * [ e2.y, -e2.x ; -e1.y, e1.x ]; store its transpose.
    inv_t = {e2.y * inv, -e2.x * inv, -e1.y * inv, e1.x * inv};
  }

  Vec2 map(const Vec2& ref) const {
    return {origin.x + jac[0] * ref.x + jac[2] * ref.y,
            origin.y + jac[1] * ref.x + jac[3] * ref.y};
  }

  Vec2 push_gradient(const Vec2& g) const {
    return {inv_t[0] * g.x + inv_t[2] * g.y, inv_t[1] * g.x + inv_t[3] * g.y};
  }

  /// Reference coordinates of a physical point (may lie outside the triangle).
  Vec2 pull(const Vec2& x) const {
    const Vec2 d = x - origin;
    // J^{-1} d, with J^{-1} = (inv_t)^T
    return {inv_t[0] * d.x + inv_t[1] * d.y, inv_t[2] * d.x + inv_t[3] * d.y};
  }
};

}  // namespace magauge
