#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <locale>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace magauge {

/// Catalog revision recorded in run manifests.
inline constexpr const char* kCatalogVersion = "1";

struct VectorPotential {
  std::string name;
  std::function<Vec2(const Vec2&)> eval;
  std::function<double(const Vec2&)> curl;  // empty when no analytic form is known
  bool polynomial = true;                   // false for trigonometric fields

  Vec2 operator()(const Vec2& x) const { return eval(x); }
};

/// Scalar curl dA2/dx - dA1/dy; analytic when available, otherwise a central
/// difference with step 1e-6.
inline double eval_curl(const VectorPotential& a, const Vec2& x) {
  if (a.curl) return a.curl(x);
  constexpr double h = 1e-6;
  const double da2dx = (a.eval({x.x + h, x.y}).y - a.eval({x.x - h, x.y}).y) / (2 * h);
  const double da1dy = (a.eval({x.x, x.y + h}).x - a.eval({x.x, x.y - h}).x) / (2 * h);
  return da2dx - da1dy;
}

namespace potentials {

inline VectorPotential zero() {
  return {"zero", [](const Vec2&) { return Vec2{}; }, [](const Vec2&) { return 0.0; }, true};
}

inline VectorPotential constant(double c1, double c2) {
  std::ostringstream name;
  name.imbue(std::locale::classic());
  name.precision(17);
  name << "constant(" << c1 << "," << c2 << ")";
  return {name.str(), [c1, c2](const Vec2&) { return Vec2{c1, c2}; }, [](const Vec2&) { return 0.0; }, true};
}

inline VectorPotential ex1() {
  return {"ex1",
          [](const Vec2& p) { return Vec2{-100.0 * (p.x * p.x + p.y * p.y), -100.0 * (p.x * p.x - p.y * p.y)}; },
          [](const Vec2& p) { return 200.0 * (p.y - p.x); }, true};
}

inline VectorPotential ex2() {
  constexpr double c = 5.0 * std::numbers::pi;
  return {"ex2",
          [](const Vec2& p) {
            const double r2 = p.x * p.x + p.y * p.y;
            const double f1 = c * std::sin(r2), f2 = c * std::cos(r2);
            return Vec2{-100.0 * std::cos(f1) * std::sin(f2), -100.0 * std::sin(f1) * std::cos(f2)};
          },
          [](const Vec2& p) {
            const double r2 = p.x * p.x + p.y * p.y;
            const double f1 = c * std::sin(r2), f2 = c * std::cos(r2);
            const double f1x = 2 * c * p.x * std::cos(r2), f1y = 2 * c * p.y * std::cos(r2);
            const double f2x = -2 * c * p.x * std::sin(r2), f2y = -2 * c * p.y * std::sin(r2);
            const double cc = std::cos(f1) * std::cos(f2), ss = std::sin(f1) * std::sin(f2);
            const double da2dx = -100.0 * (cc * f1x - ss * f2x);
            const double da1dy = -100.0 * (-ss * f1y + cc * f2y);
            return da2dx - da1dy;
          },
          false};
}

inline VectorPotential ex3() {
  constexpr double pi = std::numbers::pi;
  return {"ex3",
          [](const Vec2& p) {
            const double f = pi * std::sin(pi * p.x) * std::cos(pi * p.y);
            return Vec2{-100.0 * std::cos(f), -100.0 * std::sin(f)};
          },
          [](const Vec2& p) {
            const double f = pi * std::sin(pi * p.x) * std::cos(pi * p.y);
            const double fx = pi * pi * std::cos(pi * p.x) * std::cos(pi * p.y);
            const double fy = -pi * pi * std::sin(pi * p.x) * std::sin(pi * p.y);
            return -100.0 * (std::cos(f) * fx + std::sin(f) * fy);
          },
          false};
}

inline VectorPotential ex4() {
  return {"ex4", [](const Vec2& p) { return Vec2{-25.0 * p.y, 25.0 * p.x}; }, [](const Vec2&) { return 50.0; }, true};
}

inline VectorPotential a1() {
  return {"a1", [](const Vec2& p) { return Vec2{-0.5 * p.y, 0.5 * p.x}; }, [](const Vec2&) { return 1.0; }, true};
}

inline VectorPotential a2() {
  return {"a2", [](const Vec2& p) { return Vec2{-p.y, 0.0}; }, [](const Vec2&) { return 1.0; }, true};
}

inline VectorPotential a3() {
  return {"a3", [](const Vec2& p) { return Vec2{0.0, p.x}; }, [](const Vec2&) { return 1.0; }, true};
}

}  // namespace potentials

/// Catalog names accepted by builtin_potential.
inline std::vector<std::string> catalog_names() {
  return {"ex1", "ex2", "ex3", "ex4", "a1", "a2", "a3", "constant(c1,c2)", "zero"};
}

/// Looks up a catalog entry: ex1..ex4, a1..a3, zero, or constant(c1,c2).
inline VectorPotential builtin_potential(const std::string& name) {
  if (name == "ex1") return potentials::ex1();
  if (name == "ex2") return potentials::ex2();
  if (name == "ex3") return potentials::ex3();
  if (name == "ex4") return potentials::ex4();
  if (name == "a1") return potentials::a1();
  if (name == "a2") return potentials::a2();
  if (name == "a3") return potentials::a3();
  if (name == "zero") return potentials::zero();
  if (name.starts_with("constant(") && name.ends_with(")")) {
    std::istringstream in(name.substr(9, name.size() - 10));
    in.imbue(std::locale::classic());
    double c1 = 0, c2 = 0;
    char comma = 0;
    std::string rest;
    if ((in >> c1 >> comma >> c2) && comma == ',' && !(in >> rest) && std::isfinite(c1) && std::isfinite(c2))
      return potentials::constant(c1, c2);
  }
  throw std::invalid_argument("unknown vector potential '" + name + "'");
}

// ---------------------------------------------------------------------------
// Scalar potentials
// ---------------------------------------------------------------------------

/// 64-bit mix generator: state += 0x9E3779B97F4A7C15 then a xor-shift-multiply
/// finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

/// Draw n (0-based) of the sequence seeded with seed, mapped to [0, 1) using
/// the top 53 bits.
inline double uniform_draw(std::uint64_t seed, std::uint64_t n) {
  const std::uint64_t state = seed + (n + 1) * 0x9E3779B97F4A7C15ULL;
  return static_cast<double>(mix64(state) >> 11) * 0x1.0p-53;
}

/// Piecewise-constant potential on a 16x16 grid of congruent squares over
/// (-1,1)^2. Cell (i,j) counts from the lower-left corner, i along x.
class GridScalarPotential {
 public:
  static constexpr int kCells = 16;

  GridScalarPotential(std::uint64_t seed, double vstar) : seed_(seed), vstar_(vstar) {
    if (!(vstar > 0.0) || !std::isfinite(vstar)) throw std::invalid_argument("V* must be positive");
    for (int j = 0; j < kCells; ++j)
      for (int i = 0; i < kCells; ++i) {
        const int c = j * kCells + i;
        units_[c] = uniform_draw(seed, static_cast<std::uint64_t>(c));
        values_[c] = vstar * units_[c];
      }
  }

  std::uint64_t seed() const { return seed_; }
  double vstar() const { return vstar_; }
  double cell_value(int i, int j) const { return values_[j * kCells + i]; }
  /// Draw in [0,1) behind cell (i,j); independent of V*.
  double unit_value(int i, int j) const { return units_[j * kCells + i]; }
  const std::array<double, kCells * kCells>& values() const { return values_; }

  double operator()(const Vec2& x) const {
    auto index = [](double t) {
      const int k = static_cast<int>(std::floor((t + 1.0) * 0.5 * kCells));
      return std::clamp(k, 0, kCells - 1);
    };
    return cell_value(index(x.x), index(x.y));
  }

 private:
  std::uint64_t seed_;
  double vstar_;
  std::array<double, kCells * kCells> units_{};
  std::array<double, kCells * kCells> values_{};
};

struct ScalarPotential {
  std::string name = "none";
  std::function<double(const Vec2&)> eval;  // empty means V = 0
  std::optional<GridScalarPotential> grid;

  bool is_zero() const { return !eval; }
  double operator()(const Vec2& x) const { return eval ? eval(x) : 0.0; }

  static ScalarPotential none() { return {}; }
  static ScalarPotential random_grid(std::uint64_t seed, double vstar) {
    ScalarPotential v;
    v.grid.emplace(seed, vstar);
    std::ostringstream name;
    name.imbue(std::locale::classic());
    name.precision(17);
    name << "grid(" << seed << "," << vstar << ")";
    v.name = name.str();
    v.eval = [g = *v.grid](const Vec2& x) { return g(x); };
    return v;
  }
};

inline GridScalarPotential random_scalar_potential(std::uint64_t seed, double vstar) {
  return GridScalarPotential(seed, vstar);
}

}  // namespace magauge
