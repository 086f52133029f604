#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace magauge {

inline constexpr int kMaxDegree = 3;

/// Nodal Lagrange element of degree p on the reference triangle, built on the
/// equispaced barycentric lattice. Local ordering: the three vertices, then
/// p-1 nodes on each edge (0,1), (1,2), (2,0) running from the first vertex
/// to the second, then interior nodes.
class LagrangeElement {
 public:
  explicit LagrangeElement(int p) : p_(p) {
    if (p < 1 || p > kMaxDegree)
      throw std::invalid_argument("unsupported Lagrange degree " + std::to_string(p));
    for (int k = 0; k < 3; ++k) {
      std::array<int, 3> a{0, 0, 0};
      a[k] = p;
      lattice_.push_back(a);
    }
    for (int k = 0; k < 3; ++k) {
      const int va = k, vb = (k + 1) % 3;
      for (int t = 1; t < p; ++t) {
        std::array<int, 3> a{0, 0, 0};
        a[va] = p - t;
        a[vb] = t;
        lattice_.push_back(a);
      }
    }
    for (int i = 1; i < p; ++i)
      for (int j = 1; i + j < p; ++j) lattice_.push_back({p - i - j, i, j});
  }

  int degree() const { return p_; }
  int num_dofs() const { return static_cast<int>(lattice_.size()); }
  int dofs_per_edge() const { return p_ - 1; }
  int interior_dofs() const { return (p_ - 1) * (p_ - 2) / 2; }

  /// Barycentric lattice index of local node i (coordinates are index / p).
  const std::array<int, 3>& node(int i) const { return lattice_[i]; }

  Vec2 node_point(int i) const {
    return {static_cast<double>(lattice_[i][1]) / p_, static_cast<double>(lattice_[i][2]) / p_};
  }

  /// Values and reference gradients of every local basis function at ref.
  void eval(const Vec2& ref, std::vector<double>& values, std::vector<Vec2>& grads) const {
    const std::array<double, 3> lam{1.0 - ref.x - ref.y, ref.x, ref.y};
    static constexpr std::array<Vec2, 3> dlam{Vec2{-1.0, -1.0}, Vec2{1.0, 0.0}, Vec2{0.0, 1.0}};
    const int n = num_dofs();
    values.resize(n);
    grads.resize(n);
    for (int i = 0; i < n; ++i) {
      // phi = prod_k f_k(lam_k), f_k(s) = prod_{j < a_k} (p s - j) / (j + 1)
      std::array<double, 3> f{}, df{};
      for (int k = 0; k < 3; ++k) {
        const int ak = lattice_[i][k];
        double v = 1.0, d = 0.0;
        for (int j = 0; j < ak; ++j) {
          const double factor = (p_ * lam[k] - j) / (j + 1);
          d = d * factor + v * p_ / (j + 1);
          v *= factor;
        }
        f[k] = v;
        df[k] = d;
      }
      values[i] = f[0] * f[1] * f[2];
      Vec2 g{};
      g += (df[0] * f[1] * f[2]) * dlam[0];
      g += (f[0] * df[1] * f[2]) * dlam[1];
      g += (f[0] * f[1] * df[2]) * dlam[2];
      grads[i] = g;
    }
  }

 private:
  int p_;
  std::vector<std::array<int, 3>> lattice_;
};

/// Free-function form: basis values and reference gradients for degree p.
inline void eval_reference_basis(int p, const Vec2& ref, std::vector<double>& values,
                                 std::vector<Vec2>& grads) {
  LagrangeElement(p).eval(ref, values, grads);
}

/// Basis values and reference gradients tabulated at the points of a rule.
struct BasisTable {
  int num_dofs = 0;
  std::vector<double> values;  // [q * num_dofs + i]
  std::vector<Vec2> grads;     // [q * num_dofs + i]

  template <class Points>
  BasisTable(const LagrangeElement& fe, const Points& points) : num_dofs(fe.num_dofs()) {
    std::vector<double> v;
    std::vector<Vec2> g;
    for (const auto& pt : points) {
      fe.eval(pt, v, g);
      values.insert(values.end(), v.begin(), v.end());
      grads.insert(grads.end(), g.begin(), g.end());
    }
  }

  double value(std::size_t q, int i) const { return values[q * num_dofs + i]; }
  const Vec2& grad(std::size_t q, int i) const { return grads[q * num_dofs + i]; }
};

}  // namespace magauge
