#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fe_space.hpp"
#include "potentials.hpp"
#include "quadrature.hpp"
#include "sparse.hpp"

namespace magauge {

/// Field evaluated inside a cell: (cell, reference point, physical point).
using CellVectorField = std::function<Vec2(std::size_t, const Vec2&, const Vec2&)>;
using CellScalarField = std::function<double(std::size_t, const Vec2&, const Vec2&)>;

inline CellVectorField as_cell_field(const VectorPotential& a) {
  return [f = a.eval](std::size_t, const Vec2&, const Vec2& x) { return f(x); };
}

inline CellScalarField as_cell_field(const ScalarPotential& v) {
  if (v.is_zero()) return {};
  return [f = v.eval](std::size_t, const Vec2&, const Vec2& x) { return f(x); };
}

/// Default exactness: max(2p, 8), at least 10 for non-polynomial fields.
inline int default_quad_degree(int p, bool polynomial_field) {
  int d = std::max(2 * p, 8);
  if (!polynomial_field) d = std::max(d, 10);
  return std::min(d, kMaxQuadDegree);
}

struct AssemblyOptions {
  int quad_degree = 0;      // 0 selects default_quad_degree
  bool polynomial = true;   // field class used by the default
  int min_exactness = -1;   // -1 means 2p
  int threads = 0;          // 0 means hardware concurrency
};

namespace detail {

inline int resolve_quad_degree(const FeSpace& space, const AssemblyOptions& opt) {
  const int p = space.degree();
  const int d = opt.quad_degree > 0 ? opt.quad_degree : default_quad_degree(p, opt.polynomial);
  const int floor = opt.min_exactness >= 0 ? opt.min_exactness : 2 * p;
  if (d < floor)
    throw std::invalid_argument("quadrature exactness " + std::to_string(d) + " is below the floor " +
                                std::to_string(floor) + " for p=" + std::to_string(p));
  return d;
}

inline int resolve_threads(int requested, std::size_t work) {
  int t = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(t, work / 64 + 1)));
}

/// Runs body(first, last, chunk) over contiguous cell ranges and returns the
/// per-chunk outputs in range order, so concatenation equals the serial order.
template <class Out, class Body>
std::vector<Out> chunked(std::size_t n, int threads, Body body) {
  std::vector<Out> out(threads);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int c = 0; c < threads; ++c) {
    const std::size_t first = n * c / threads, last = n * (c + 1) / threads;
    auto task = [&, first, last, c] {
      try {
        body(first, last, out[c]);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    };
    if (threads == 1) task();
    else pool.emplace_back(task);
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

template <class S>
std::vector<Triplet<S>> concat(std::vector<std::vector<Triplet<S>>>&& parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<Triplet<S>> all;
  all.reserve(total);
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return all;
}

}  // namespace detail

/// Discrete pencil on the free DOFs: K for the magnetic form, M for the L2
/// inner product. free_dofs[i] is the global DOF behind row i.
struct HermitianPencil {
  SparseMatrix<Complex> K;
  SparseMatrix<double> M;
  std::vector<int> free_dofs;
  std::size_t num_dofs = 0;  // full DOF count, essential included
  int quad_degree = 0;

  int size() const { return K.rows(); }

  /// Full coefficient vector with zero essential entries.
  Vector<Complex> expand(const Vector<Complex>& x) const {
    Vector<Complex> full = Vector<Complex>::Zero(static_cast<Eigen::Index>(num_dofs));
    for (std::size_t i = 0; i < free_dofs.size(); ++i) full[free_dofs[i]] = x[static_cast<Eigen::Index>(i)];
    return full;
  }

  Vector<Complex> restrict_to_free(const Vector<Complex>& full) const {
    Vector<Complex> x(static_cast<Eigen::Index>(free_dofs.size()));
    for (std::size_t i = 0; i < free_dofs.size(); ++i) x[static_cast<Eigen::Index>(i)] = full[free_dofs[i]];
    return x;
  }
};

/// Assembles K_ij = int grad phi_j . grad phi_i + i A.(phi_i grad phi_j - phi_j grad phi_i)
/// + (|A|^2 + V) phi_i phi_j and M_ij = int phi_i phi_j on the free DOFs.
inline HermitianPencil assemble_magnetic_forms(const FeSpace& space, const CellVectorField& A,
                                               const CellScalarField& V = {}, AssemblyOptions opt = {}) {
  const int qdeg = detail::resolve_quad_degree(space, opt);
  const QuadRule& rule = quad_rule(qdeg);
  const BasisTable table(space.element(), rule.points);
  const int nloc = space.dofs_per_cell();
  const Mesh& mesh = space.mesh();

  struct Parts {
    std::vector<Triplet<Complex>> k;
    std::vector<Triplet<double>> m;
  };
  const int threads = detail::resolve_threads(opt.threads, space.num_cells());
  auto parts = detail::chunked<Parts>(space.num_cells(), threads, [&](std::size_t first, std::size_t last, Parts& out) {
    std::vector<Vec2> grads(static_cast<std::size_t>(nloc));
    std::vector<Complex> kloc(static_cast<std::size_t>(nloc * nloc));
    std::vector<double> mloc(static_cast<std::size_t>(nloc * nloc));
    out.k.reserve((last - first) * nloc * nloc);
    out.m.reserve((last - first) * nloc * nloc);
    for (std::size_t c = first; c < last; ++c) {
      const AffineMap map = mesh.cell_map(c);
      const double jac = std::abs(map.det);
      std::fill(kloc.begin(), kloc.end(), Complex{});
      std::fill(mloc.begin(), mloc.end(), 0.0);
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const Vec2& ref = rule.points[q];
        const Vec2 x = map.map(ref);
        const Vec2 a = A ? A(c, ref, x) : Vec2{};
        const double v = V ? V(c, ref, x) : 0.0;
        const double w = rule.weights[q] * jac;
        const double pot = norm2(a) + v;
        for (int i = 0; i < nloc; ++i) grads[i] = map.push_gradient(table.grad(q, i));
        for (int i = 0; i < nloc; ++i) {
          const double pi = table.value(q, i);
          for (int j = 0; j < nloc; ++j) {
            const double pj = table.value(q, j);
            const double stiff = dot(grads[j], grads[i]);
            const double adv = dot(a, pi * grads[j] - pj * grads[i]);
            kloc[i * nloc + j] += w * Complex(stiff + pot * pi * pj, adv);
            mloc[i * nloc + j] += w * pi * pj;
          }
        }
      }
      const int* dofs = space.cell_dofs(c);
      for (int i = 0; i < nloc; ++i) {
        const int fi = space.free_index(dofs[i]);
        if (fi < 0) continue;
        for (int j = 0; j < nloc; ++j) {
          const int fj = space.free_index(dofs[j]);
          if (fj < 0) continue;
          out.k.push_back({fi, fj, kloc[i * nloc + j]});
          out.m.push_back({fi, fj, mloc[i * nloc + j]});
        }
      }
    }
  });

  std::vector<std::vector<Triplet<Complex>>> kparts;
  std::vector<std::vector<Triplet<double>>> mparts;
  for (auto& p : parts) {
    kparts.push_back(std::move(p.k));
    mparts.push_back(std::move(p.m));
  }
  const int n = static_cast<int>(space.num_free());
  HermitianPencil pencil;
  pencil.K = SparseMatrix<Complex>::from_triplets(n, n, detail::concat(std::move(kparts)));
  pencil.M = SparseMatrix<double>::from_triplets(n, n, detail::concat(std::move(mparts)));
  pencil.free_dofs = space.free_dofs();
  pencil.num_dofs = space.num_dofs();
  pencil.quad_degree = qdeg;
  return pencil;
}

inline HermitianPencil assemble_magnetic_forms(const FeSpace& space, const VectorPotential& A,
                                               const ScalarPotential& V = {}, AssemblyOptions opt = {}) {
  opt.polynomial = opt.polynomial && A.polynomial;
  return assemble_magnetic_forms(space, as_cell_field(A), as_cell_field(V), opt);
}

/// Bordered Neumann-Poisson system [[K, m], [m^T, 0]] [a; mu] = [b; 0] with
/// K the real stiffness, m_i = int phi_i and b_i = int A . grad phi_i.
struct NeumannSystem {
  SparseMatrix<double> matrix;  // (n+1) x (n+1)
  Vector<double> rhs;           // n+1
  Vector<double> mass_vector;   // m
  int quad_degree = 0;
};

inline NeumannSystem assemble_neumann_poisson(const FeSpace& space, const CellVectorField& A, AssemblyOptions opt = {}) {
  if (!space.all_free()) throw std::invalid_argument("Neumann-Poisson system needs a space without essential DOFs");
  const int qdeg = detail::resolve_quad_degree(space, opt);
  const QuadRule& rule = quad_rule(qdeg);
  const BasisTable table(space.element(), rule.points);
  const int nloc = space.dofs_per_cell();
  const Mesh& mesh = space.mesh();
  const int n = static_cast<int>(space.num_dofs());

  struct Parts {
    std::vector<Triplet<double>> k;
    std::vector<std::pair<int, double>> b;  // (dof, contribution) in cell order
    std::vector<std::pair<int, double>> m;
  };
  // Reference gradient products: the stiffness of an affine cell is a
  // combination of sxx, sxy + syx and syy with metric coefficients.
  const auto nn = static_cast<std::size_t>(nloc * nloc);
  std::vector<double> sxx(nn, 0.0), sxy(nn, 0.0), syy(nn, 0.0);
  for (std::size_t q = 0; q < rule.size(); ++q)
    for (int i = 0; i < nloc; ++i)
      for (int j = 0; j < nloc; ++j) {
        const Vec2 gi = table.grad(q, i), gj = table.grad(q, j);
        const double w = rule.weights[q];
        sxx[i * nloc + j] += w * gi.x * gj.x;
        sxy[i * nloc + j] += w * (gi.x * gj.y + gi.y * gj.x);
        syy[i * nloc + j] += w * gi.y * gj.y;
      }

  const int threads = detail::resolve_threads(opt.threads, space.num_cells());
  auto parts = detail::chunked<Parts>(space.num_cells(), threads, [&](std::size_t first, std::size_t last, Parts& out) {
    std::vector<double> kloc(nn), bloc(nloc), mloc(nloc);
    for (std::size_t c = first; c < last; ++c) {
      const AffineMap map = mesh.cell_map(c);
      const double jac = std::abs(map.det);
      const Vec2 c1 = map.push_gradient({1.0, 0.0}), c2 = map.push_gradient({0.0, 1.0});
      const double gxx = jac * dot(c1, c1), gxy = jac * dot(c1, c2), gyy = jac * dot(c2, c2);
      for (std::size_t e = 0; e < nn; ++e) kloc[e] = gxx * sxx[e] + gxy * sxy[e] + gyy * syy[e];
      std::fill(bloc.begin(), bloc.end(), 0.0);
      std::fill(mloc.begin(), mloc.end(), 0.0);
      for (std::size_t q = 0; q < rule.size(); ++q) {
        const Vec2& ref = rule.points[q];
        const Vec2 a = A ? A(c, ref, map.map(ref)) : Vec2{};
        const double w = rule.weights[q] * jac;
        const Vec2 ga = w * a;
        for (int i = 0; i < nloc; ++i) {
          bloc[i] += dot(ga, map.push_gradient(table.grad(q, i)));
          mloc[i] += w * table.value(q, i);
        }
      }
      const int* dofs = space.cell_dofs(c);
      for (int i = 0; i < nloc; ++i) {
        out.b.emplace_back(dofs[i], bloc[i]);
        out.m.emplace_back(dofs[i], mloc[i]);
        for (int j = 0; j < nloc; ++j) out.k.push_back({dofs[i], dofs[j], kloc[i * nloc + j]});
      }
    }
  });

  NeumannSystem sys;
  sys.quad_degree = qdeg;
  sys.rhs = Vector<double>::Zero(n + 1);
  sys.mass_vector = Vector<double>::Zero(n);
  std::vector<std::vector<Triplet<double>>> kparts;
  for (auto& p : parts) {
    for (const auto& [d, v] : p.b) sys.rhs[d] += v;
    for (const auto& [d, v] : p.m) sys.mass_vector[d] += v;
    kparts.push_back(std::move(p.k));
  }
  auto trip = detail::concat(std::move(kparts));
  for (int i = 0; i < n; ++i) {
    trip.push_back({i, n, sys.mass_vector[i]});
    trip.push_back({n, i, sys.mass_vector[i]});
  }
  sys.matrix = SparseMatrix<double>::from_triplets(n + 1, n + 1, std::move(trip));
  return sys;
}

inline NeumannSystem assemble_neumann_poisson(const FeSpace& space, const VectorPotential& A, AssemblyOptions opt = {}) {
  opt.polynomial = opt.polynomial && A.polynomial;
  return assemble_neumann_poisson(space, as_cell_field(A), opt);
}

/// Load vector int phi_i over all DOFs.
inline Vector<double> basis_integrals(const FeSpace& space, int quad_degree = 0) {
  const QuadRule& rule = quad_rule(quad_degree > 0 ? quad_degree : default_quad_degree(space.degree(), true));
  const BasisTable table(space.element(), rule.points);
  Vector<double> m = Vector<double>::Zero(static_cast<Eigen::Index>(space.num_dofs()));
  for (std::size_t c = 0; c < space.num_cells(); ++c) {
    const double jac = std::abs(space.mesh().cell_map(c).det);
    const int* dofs = space.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q)
      for (int i = 0; i < space.dofs_per_cell(); ++i) m[dofs[i]] += rule.weights[q] * jac * table.value(q, i);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

/// sqrt(sum_cells sum_q w_q |G|^2 |J|) for a cell-wise vector field.
inline double field_l2_norm(const CellVectorField& g, const Mesh& mesh, const QuadRule& rule) {
  double s = 0.0;
  for (std::size_t c = 0; c < mesh.num_triangles(); ++c) {
    const AffineMap map = mesh.cell_map(c);
    const double jac = std::abs(map.det);
    for (std::size_t q = 0; q < rule.size(); ++q) s += rule.weights[q] * jac * norm2(g(c, rule.points[q], map.map(rule.points[q])));
  }
  return std::sqrt(s);
}

inline double field_l2_norm(const VectorPotential& a, const Mesh& mesh, const QuadRule& rule) {
  return field_l2_norm(as_cell_field(a), mesh, rule);
}

inline double field_l2_norm(const CellScalarField& f, const Mesh& mesh, const QuadRule& rule) {
  double s = 0.0;
  for (std::size_t c = 0; c < mesh.num_triangles(); ++c) {
    const AffineMap map = mesh.cell_map(c);
    const double jac = std::abs(map.det);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const double v = f(c, rule.points[q], map.map(rule.points[q]));
      s += rule.weights[q] * jac * v * v;
    }
  }
  return std::sqrt(s);
}

struct FunctionNorms {
  double l2 = 0.0;        // ||u||
  double grad = 0.0;      // ||grad u||
  double weighted = 0.0;  // ||W u||
};

/// Norms of the FE function with full coefficient vector u; W is optional.
inline FunctionNorms fe_function_norms(const FeSpace& space, const Vector<Complex>& u, const CellVectorField& W = {},
                                       int quad_degree = 0) {
  if (u.size() != static_cast<Eigen::Index>(space.num_dofs()))
    throw std::invalid_argument("coefficient vector must cover every DOF");
  const QuadRule& rule = quad_rule(quad_degree > 0 ? quad_degree : default_quad_degree(space.degree(), false));
  const BasisTable table(space.element(), rule.points);
  const Mesh& mesh = space.mesh();
  double l2 = 0.0, gr = 0.0, wt = 0.0;
  for (std::size_t c = 0; c < space.num_cells(); ++c) {
    const AffineMap map = mesh.cell_map(c);
    const double jac = std::abs(map.det);
    const int* dofs = space.cell_dofs(c);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      Complex val{}, dx{}, dy{};
      for (int i = 0; i < space.dofs_per_cell(); ++i) {
        const Complex ci = u[dofs[i]];
        const Vec2 g = map.push_gradient(table.grad(q, i));
        val += ci * table.value(q, i);
        dx += ci * g.x;
        dy += ci * g.y;
      }
      const double w = rule.weights[q] * jac;
      l2 += w * std::norm(val);
      gr += w * (std::norm(dx) + std::norm(dy));
      if (W) wt += w * norm2(W(c, rule.points[q], map.map(rule.points[q]))) * std::norm(val);
    }
  }
  return {std::sqrt(l2), std::sqrt(gr), std::sqrt(wt)};
}

}  // namespace magauge
