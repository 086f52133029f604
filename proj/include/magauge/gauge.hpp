#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "assemble.hpp"

namespace magauge {

namespace detail {

/// Monomials xi^r eta^s with r + s <= d, ordered by total degree.
inline int monomial_count(int d) { return (d + 1) * (d + 2) / 2; }

inline void monomials(int d, const Vec2& x, double* out) {
  int k = 0;
  for (int t = 0; t <= d; ++t)
    for (int s = 0; s <= t; ++s) {
      double v = 1.0;
      for (int e = 0; e < t - s; ++e) v *= x.x;
      for (int e = 0; e < s; ++e) v *= x.y;
      out[k++] = v;
    }
}

/// Physical gradient of a degree-p FE function as per-cell polynomials of
/// degree p-1 in reference coordinates: 2 * monomial_count(p-1) coefficients
/// per cell, x components first.
inline std::vector<double> gradient_polynomials(const FeSpace& space, const Vector<double>& u) {
  const int d = space.degree() - 1;
  const int nm = monomial_count(d);
  std::vector<Vec2> pts;
  if (d == 0) pts.push_back({1.0 / 3.0, 1.0 / 3.0});
  for (int i = 0; d > 0 && i <= d; ++i)
    for (int j = 0; i + j <= d; ++j) pts.push_back({static_cast<double>(i) / d, static_cast<double>(j) / d});
  Eigen::MatrixXd vander(nm, nm);
  std::vector<double> mono(static_cast<std::size_t>(nm));
  for (int k = 0; k < nm; ++k) {
    monomials(d, pts[k], mono.data());
    for (int m = 0; m < nm; ++m) vander(k, m) = mono[m];
  }
  const Eigen::MatrixXd inv = vander.inverse();
  const BasisTable table(space.element(), pts);
  const int nloc = space.dofs_per_cell();
  std::vector<double> out(space.num_cells() * 2 * nm);
  Eigen::MatrixXd samples(nm, 2);
  for (std::size_t c = 0; c < space.num_cells(); ++c) {
    const int* dofs = space.cell_dofs(c);
    for (int k = 0; k < nm; ++k) {
      Vec2 g{};
      for (int i = 0; i < nloc; ++i) g += u[dofs[i]] * table.grad(k, i);
      samples(k, 0) = g.x;
      samples(k, 1) = g.y;
    }
    const Eigen::MatrixXd coef = inv * samples;
    const AffineMap map = space.mesh().cell_map(c);
    double* dst = out.data() + c * 2 * nm;
    for (int m = 0; m < nm; ++m) {
      const Vec2 phys = map.push_gradient({coef(m, 0), coef(m, 1)});
      dst[m] = phys.x;
      dst[nm + m] = phys.y;
    }
  }
  return out;
}

}  // namespace detail

/// Canonical gauge of a vector potential on one mesh: the mean-zero FE
/// function a minimising ||A - grad a|| over the scalar space, and the field
/// F = A - grad a evaluated cell by cell.
struct GaugeField {
  std::shared_ptr<const FeSpace> space;  // all-Neumann real space
  VectorPotential A;
  Vector<double> a;          // full coefficient vector
  double multiplier = 0.0;   // mean-value Lagrange multiplier
  double norm_A = 0.0;
  double norm_F = 0.0;
  int quad_degree = 0;
  double min_pivot = 0.0;
  double pivot_threshold = 0.0;
  double seconds = 0.0;
  std::shared_ptr<const std::vector<double>> grad_coeffs;  // see detail::gradient_polynomials

  /// grad a_h on a cell at a reference point.
  Vec2 grad_a(std::size_t cell, const Vec2& ref) const {
    const int d = space->degree() - 1;
    const int nm = detail::monomial_count(d);
    std::array<double, kMaxDegree * (kMaxDegree + 1) / 2> mono{};
    detail::monomials(d, ref, mono.data());
    const double* c = grad_coeffs->data() + cell * 2 * nm;
    Vec2 out{};
    for (int m = 0; m < nm; ++m) {
      out.x += c[m] * mono[m];
      out.y += c[nm + m] * mono[m];
    }
    return out;
  }

  Vec2 eval_F(std::size_t cell, const Vec2& ref) const {
    return A(space->mesh().cell_map(cell).map(ref)) - grad_a(cell, ref);
  }

  /// F as a self-contained cell field; the physical point must match ref.
  CellVectorField field() const {
    return [A = A, g = grad_coeffs, d = space->degree() - 1](std::size_t c, const Vec2& ref, const Vec2& x) {
      const int nm = detail::monomial_count(d);
      std::array<double, kMaxDegree * (kMaxDegree + 1) / 2> mono{};
      detail::monomials(d, ref, mono.data());
      const double* k = g->data() + c * 2 * nm;
      Vec2 ga{};
      for (int m = 0; m < nm; ++m) {
        ga.x += k[m] * mono[m];
        ga.y += k[nm + m] * mono[m];
      }
      return A(x) - ga;
    };
  }
};

inline Vec2 eval_F(const GaugeField& g, std::size_t cell, const Vec2& ref) { return g.eval_F(cell, ref); }

/// Solves the bordered Neumann problem for a and caches ||A||, ||F||.
inline GaugeField compute_canonical_gauge(std::shared_ptr<const FeSpace> space, const VectorPotential& A,
                                          AssemblyOptions opt = {}, FactorOptions fopt = {}) {
  if (!space->all_free()) throw std::invalid_argument("canonical gauge needs an all-Neumann space");
  const auto start = std::chrono::steady_clock::now();
  opt.polynomial = opt.polynomial && A.polynomial;
  const NeumannSystem sys = assemble_neumann_poisson(*space, A, opt);
  const auto lu = factorize(sys.matrix, FactorKind::BorderedIndefinite, fopt);
  const Vector<double> sol = lu.solve(sys.rhs);

  GaugeField g;
  g.space = std::move(space);
  g.A = A;
  const auto n = static_cast<Eigen::Index>(g.space->num_dofs());
  g.a = sol.head(n);
  g.multiplier = sol[n];
  g.grad_coeffs = std::make_shared<const std::vector<double>>(detail::gradient_polynomials(*g.space, g.a));
  g.quad_degree = sys.quad_degree;
  g.min_pivot = lu.min_pivot();
  g.pivot_threshold = lu.pivot_threshold();
  // ||A|| and ||F|| from one pass with A evaluated once per point.
  const QuadRule& rule = quad_rule(g.quad_degree);
  const Mesh& mesh = g.space->mesh();
  double a2 = 0.0, f2 = 0.0;
  for (std::size_t c = 0; c < mesh.num_triangles(); ++c) {
    const AffineMap map = mesh.cell_map(c);
    const double jac = std::abs(map.det);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Vec2 av = A(map.map(rule.points[q]));
      const double w = rule.weights[q] * jac;
      a2 += w * norm2(av);
      f2 += w * norm2(av - g.grad_a(c, rule.points[q]));
    }
  }
  g.norm_A = std::sqrt(a2);
  g.norm_F = std::sqrt(f2);
  g.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return g;
}

inline GaugeField compute_canonical_gauge(const FeSpace& space, const VectorPotential& A, AssemblyOptions opt = {},
                                          FactorOptions fopt = {}) {
  return compute_canonical_gauge(std::make_shared<const FeSpace>(space), A, opt, fopt);
}

struct GaugeReport {
  double galerkin_residual = 0.0;  // max_j |int F.grad v_j| / ||grad v_j||
  double galerkin_scaled = 0.0;    // the same divided by the field scale
  double divergence_residual = 0.0;  // scaled, interior basis functions only
  double boundary_flux = 0.0;      // int_{boundary} |F.n| ds
  double norm_A = 0.0;
  double norm_F = 0.0;
  double norm_grad_a = 0.0;
  double orthogonality = 0.0;      // |int F.grad a| / (scale ||grad a||)
  double mean_a = 0.0;             // int a / area
  double field_scale = 0.0;        // ||F||, or ||A|| when F vanishes numerically
};

/// Recomputes the characterizing properties of the gauge by direct quadrature.
inline GaugeReport gauge_diagnostics(const GaugeField& g) {
  const FeSpace& space = *g.space;
  const Mesh& mesh = space.mesh();
  const QuadRule& rule = quad_rule(g.quad_degree);
  const BasisTable table(space.element(), rule.points);
  const int nloc = space.dofs_per_cell();
  const auto n = static_cast<Eigen::Index>(space.num_dofs());

  Vector<double> flux = Vector<double>::Zero(n);     // int F . grad v_j
  Vector<double> grad2 = Vector<double>::Zero(n);    // ||grad v_j||^2
  double f_dot_grad_a = 0.0, grad_a2 = 0.0, int_a = 0.0, area = 0.0;
  std::vector<Vec2> grads(static_cast<std::size_t>(nloc));
  for (std::size_t c = 0; c < space.num_cells(); ++c) {
    const AffineMap map = mesh.cell_map(c);
    const double jac = std::abs(map.det);
    const int* dofs = space.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double w = rule.weights[q] * jac;
      Vec2 ga{};
      double av = 0.0;
      for (int i = 0; i < nloc; ++i) {
        grads[i] = map.push_gradient(table.grad(q, i));
        ga += g.a[dofs[i]] * grads[i];
        av += g.a[dofs[i]] * table.value(q, i);
      }
      const Vec2 F = g.A(map.map(rule.points[q])) - ga;
      for (int i = 0; i < nloc; ++i) {
        flux[dofs[i]] += w * dot(F, grads[i]);
        grad2[dofs[i]] += w * norm2(grads[i]);
      }
      f_dot_grad_a += w * dot(F, ga);
      grad_a2 += w * norm2(ga);
      int_a += w * av;
      area += w;
    }
  }

  GaugeReport r;
  r.norm_A = g.norm_A;
  r.norm_F = g.norm_F;
  r.norm_grad_a = std::sqrt(grad_a2);
  r.mean_a = int_a / area;
  r.field_scale = g.norm_F > 1e-8 * g.norm_A ? g.norm_F : g.norm_A;
  const double scale = r.field_scale > 0.0 ? r.field_scale : 1.0;

  // Boundary DOFs: vertices and edge nodes of boundary edges.
  const auto& topo = space.topology();
  std::vector<char> on_boundary(static_cast<std::size_t>(n), 0);
  const std::size_t nv = mesh.num_vertices();
  const int per_edge = space.element().dofs_per_edge();
  for (std::size_t e = 0; e < topo.num_edges(); ++e) {
    if (topo.edge_cells[e][1] >= 0) continue;
    on_boundary[topo.edges[e][0]] = on_boundary[topo.edges[e][1]] = 1;
    for (int s = 0; s < per_edge; ++s) on_boundary[nv + e * per_edge + s] = 1;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const double res = std::abs(flux[j]) / std::sqrt(grad2[j]);
    r.galerkin_residual = std::max(r.galerkin_residual, res);
    if (!on_boundary[j]) r.divergence_residual = std::max(r.divergence_residual, res / scale);
  }
  r.galerkin_scaled = r.galerkin_residual / scale;
  r.orthogonality = r.norm_grad_a > 0.0 ? std::abs(f_dot_grad_a) / (scale * r.norm_grad_a) : 0.0;

  // int |F.n| ds along boundary edges, F taken from the adjacent cell.
  const LineRule line = gauss_legendre(space.degree() + 4);
  for (std::size_t e = 0; e < topo.num_edges(); ++e) {
    if (topo.edge_cells[e][1] >= 0) continue;
    const auto cell = static_cast<std::size_t>(topo.edge_cells[e][0]);
    const auto& tri = mesh.triangles[cell];
    int k = 0;
    while (topo.cell_edges[cell][k] != static_cast<int>(e)) ++k;
    const Vec2 p0 = mesh.vertices[tri[k]], p1 = mesh.vertices[tri[(k + 1) % 3]];
    const Vec2 d = p1 - p0;
    const double len = norm(d);
    const Vec2 normal{d.y / len, -d.x / len};
    const AffineMap map = mesh.cell_map(cell);
    for (std::size_t q = 0; q < line.points.size(); ++q) {
      const Vec2 x = p0 + line.points[q] * d;
      r.boundary_flux += line.weights[q] * len * std::abs(dot(g.eval_F(cell, map.pull(x)), normal));
    }
  }
  return r;
}

}  // namespace magauge
