#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "eig.hpp"
#include "gauge.hpp"

namespace magauge {

struct HeuristicRow {
  int j = 0;               // 1-based
  double lambda = 0.0;
  double norm_u = 0.0;     // ||u||
  double norm_grad = 0.0;  // ||grad u||
  double norm_Gu = 0.0;    // ||G u||
  double rayleigh = 0.0;   // ||grad u - i G u||^2 + ||V^{1/2} u||^2
  double rayleigh_error = 0.0;  // |rayleigh - lambda| / |lambda|
};

struct HeuristicTable {
  double field_norm = 0.0;  // ||G||
  std::vector<HeuristicRow> rows;
};

/// Norm table for eigenvectors in gauge G. Uses the assembly quadrature so the
/// Rayleigh column reproduces x^H K x exactly. Cell sums are accumulated in
/// long double; on fine meshes plain double sums drift by ~1e-12.
inline HeuristicTable heuristic_table(const FeSpace& space, const EigenResult& result, const CellVectorField& G,
                                      const CellScalarField& V, double field_norm, int quad_degree) {
  const QuadRule& rule = quad_rule(quad_degree);
  const BasisTable table(space.element(), rule.points);
  const Mesh& mesh = space.mesh();
  const int nloc = space.dofs_per_cell();
  HeuristicTable out;
  out.field_norm = field_norm;
  for (std::size_t j = 0; j < result.size(); ++j) {
    const auto& u = result.eigenvectors[j];
    long double l2 = 0.0L, gr = 0.0L, gu = 0.0L, mag = 0.0L, pot = 0.0L;
    for (std::size_t c = 0; c < space.num_cells(); ++c) {
      double cl2 = 0.0, cgr = 0.0, cgu = 0.0, cmag = 0.0, cpot = 0.0;
      const AffineMap map = mesh.cell_map(c);
      const double jac = std::abs(map.det);
      const int* dofs = space.cell_dofs(c);
      for (std::size_t q = 0; q < rule.size(); ++q) {
        Complex val{}, dx{}, dy{};
        for (int i = 0; i < nloc; ++i) {
          const Complex ci = u[dofs[i]];
          const Vec2 g = map.push_gradient(table.grad(q, i));
          val += ci * table.value(q, i);
          dx += ci * g.x;
          dy += ci * g.y;
        }
        const Vec2 ref = rule.points[q];
        const Vec2 x = map.map(ref);
        const Vec2 gv = G ? G(c, ref, x) : Vec2{};
        const double v = V ? V(c, ref, x) : 0.0;
        const double w = rule.weights[q] * jac;
        const Complex i1(0.0, 1.0);
        cl2 += w * std::norm(val);
        cgr += w * (std::norm(dx) + std::norm(dy));
        cgu += w * norm2(gv) * std::norm(val);
        cmag += w * (std::norm(dx - i1 * gv.x * val) + std::norm(dy - i1 * gv.y * val));
        cpot += w * v * std::norm(val);
      }
      l2 += cl2;
      gr += cgr;
      gu += cgu;
      mag += cmag;
      pot += cpot;
    }
    HeuristicRow row;
    row.j = static_cast<int>(j) + 1;
    row.lambda = result.eigenvalues[j];
    row.norm_u = std::sqrt(static_cast<double>(l2));
    row.norm_grad = std::sqrt(static_cast<double>(gr));
    row.norm_Gu = std::sqrt(static_cast<double>(gu));
    row.rayleigh = static_cast<double>(mag + pot);
    row.rayleigh_error = std::abs(row.rayleigh - row.lambda) / std::max(std::abs(row.lambda), std::numeric_limits<double>::min());
    out.rows.push_back(row);
  }
  return out;
}

/// Largest |x^H K x / x^H M x - lambda| / |lambda| over the computed pairs.
inline double rayleigh_identity_error(const HermitianPencil& pencil, const EigenResult& result) {
  double worst = 0.0;
  for (std::size_t j = 0; j < result.size(); ++j) {
    const Vector<Complex> x = pencil.restrict_to_free(result.eigenvectors[j]);
    const double rq = x.dot(pencil.K * x).real() / x.dot(pencil.M * x).real();
    worst = std::max(worst, std::abs(rq - result.eigenvalues[j]) / std::abs(result.eigenvalues[j]));
  }
  return worst;
}

/// True when lambda_j is separated from its neighbours by more than rel*|lambda_j|.
inline bool is_isolated(const std::vector<double>& lambdas, std::size_t j, double rel) {
  const double gap = rel * std::abs(lambdas[j]);
  if (j > 0 && std::abs(lambdas[j] - lambdas[j - 1]) <= gap) return false;
  if (j + 1 < lambdas.size() && std::abs(lambdas[j + 1] - lambdas[j]) <= gap) return false;
  return true;
}

struct GaugePairRow {
  int j = 0;
  bool compared = false;         // false inside numerically degenerate clusters
  double lambda_A = 0.0;
  double lambda_F = 0.0;
  double eigenvalue_gap = 0.0;   // |lambda_A - lambda_F|
  double modulus_deviation = 0.0;  // || |psi| - |phi| ||
  double phase_residual = 0.0;   // min_{|c|=1} || psi - c e^{i a} phi ||
};

/// Compares eigenpairs in gauges A and F = A - grad a on one space: psi should
/// equal e^{i a} phi up to a unit scalar.
inline std::vector<GaugePairRow> gauge_pair_compare(const FeSpace& space, const EigenResult& result_A,
                                                    const EigenResult& result_F, const GaugeField& gauge,
                                                    double cluster_rel = 1e-4, int quad_degree = 10) {
  const QuadRule& rule = quad_rule(quad_degree);
  const BasisTable table(space.element(), rule.points);
  const BasisTable gtable(gauge.space->element(), rule.points);
  const Mesh& mesh = space.mesh();
  std::vector<GaugePairRow> rows;
  const std::size_t k = std::min(result_A.size(), result_F.size());
  for (std::size_t j = 0; j < k; ++j) {
    GaugePairRow row;
    row.j = static_cast<int>(j) + 1;
    row.lambda_A = result_A.eigenvalues[j];
    row.lambda_F = result_F.eigenvalues[j];
    row.eigenvalue_gap = std::abs(row.lambda_A - row.lambda_F);
    row.compared = is_isolated(result_A.eigenvalues, j, cluster_rel) && is_isolated(result_F.eigenvalues, j, cluster_rel);
    if (row.compared) {
      const auto& psi = result_A.eigenvectors[j];
      const auto& phi = result_F.eigenvectors[j];
      double mod = 0.0, npsi = 0.0, ng = 0.0;
      Complex inner{};
      for (std::size_t c = 0; c < space.num_cells(); ++c) {
        const double jac = std::abs(mesh.cell_map(c).det);
        const int* dofs = space.cell_dofs(c);
        const int* gdofs = gauge.space->cell_dofs(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
          Complex vp{}, vf{};
          double av = 0.0;
          for (int i = 0; i < space.dofs_per_cell(); ++i) {
            vp += psi[dofs[i]] * table.value(q, i);
            vf += phi[dofs[i]] * table.value(q, i);
          }
          for (int i = 0; i < gauge.space->dofs_per_cell(); ++i) av += gauge.a[gdofs[i]] * gtable.value(q, i);
          const Complex g = std::polar(1.0, av) * vf;
          const double w = rule.weights[q] * jac;
          mod += w * std::pow(std::abs(vp) - std::abs(vf), 2);
          npsi += w * std::norm(vp);
          ng += w * std::norm(g);
          inner += w * std::conj(g) * vp;
        }
      }
      row.modulus_deviation = std::sqrt(mod);
      row.phase_residual = std::sqrt(std::max(0.0, npsi + ng - 2.0 * std::abs(inner)));
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Grid sampling
// ---------------------------------------------------------------------------

/// Locates the cell containing a point; returns -1 outside the mesh.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(mesh) {
    lo_ = hi_ = mesh.vertices.front();
    for (const auto& v : mesh.vertices) {
      lo_.x = std::min(lo_.x, v.x); lo_.y = std::min(lo_.y, v.y);
      hi_.x = std::max(hi_.x, v.x); hi_.y = std::max(hi_.y, v.y);
    }
    n_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_triangles()))));
    buckets_.resize(static_cast<std::size_t>(n_) * n_);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
      Vec2 a = mesh.vertices[mesh.triangles[t][0]], b = a;
      for (int k = 1; k < 3; ++k) {
        const Vec2 v = mesh.vertices[mesh.triangles[t][k]];
        a.x = std::min(a.x, v.x); a.y = std::min(a.y, v.y);
        b.x = std::max(b.x, v.x); b.y = std::max(b.y, v.y);
      }
      const auto [i0, j0] = bucket(a);
      const auto [i1, j1] = bucket(b);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) buckets_[static_cast<std::size_t>(j) * n_ + i].push_back(static_cast<int>(t));
    }
  }

  /// Cell index and reference coordinates, or -1.
  std::pair<int, Vec2> locate(const Vec2& x) const {
    constexpr double eps = 1e-12;
    if (x.x < lo_.x - eps || x.y < lo_.y - eps || x.x > hi_.x + eps || x.y > hi_.y + eps) return {-1, {}};
    const auto [i, j] = bucket(x);
    for (int t : buckets_[static_cast<std::size_t>(j) * n_ + i]) {
      const Vec2 r = mesh_.cell_map(t).pull(x);
      if (r.x >= -eps && r.y >= -eps && r.x + r.y <= 1.0 + eps) return {t, r};
    }
    return {-1, {}};
  }

  Vec2 lower() const { return lo_; }
  Vec2 upper() const { return hi_; }

 private:
  std::pair<int, int> bucket(const Vec2& x) const {
    const double sx = hi_.x > lo_.x ? (x.x - lo_.x) / (hi_.x - lo_.x) : 0.0;
    const double sy = hi_.y > lo_.y ? (x.y - lo_.y) / (hi_.y - lo_.y) : 0.0;
    return {std::clamp(static_cast<int>(sx * n_), 0, n_ - 1), std::clamp(static_cast<int>(sy * n_), 0, n_ - 1)};
  }

  const Mesh& mesh_;
  Vec2 lo_, hi_;
  int n_ = 1;
  std::vector<std::vector<int>> buckets_;
};

/// arcsin(Im z / |z|), with 0 for |z| < 1e-14.
inline double sample_phase(Complex z) {
  const double r = std::abs(z);
  if (r < 1e-14) return 0.0;
  return std::asin(std::clamp(z.imag() / r, -1.0, 1.0));
}

struct GridSamples {
  int n = 0;                    // n x n points over the bounding box, row-major from the lower-left
  std::vector<Vec2> points;
  std::vector<char> inside;
  std::vector<double> modulus, real, imag, phase;  // NaN outside
};

inline GridSamples sample_eigenvector(const FeSpace& space, const Vector<Complex>& u, int n = 201) {
  if (n < 2) throw std::invalid_argument("sample grid needs n >= 2");
  const PointLocator locator(space.mesh());
  const Vec2 lo = locator.lower(), hi = locator.upper();
  GridSamples s;
  s.n = n;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<Complex> coeffs(u.data(), u.data() + u.size());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 x{lo.x + (hi.x - lo.x) * i / (n - 1), lo.y + (hi.y - lo.y) * j / (n - 1)};
      s.points.push_back(x);
      const auto [cell, ref] = locator.locate(x);
      if (cell < 0) {
        s.inside.push_back(0);
        s.modulus.push_back(nan);
        s.real.push_back(nan);
        s.imag.push_back(nan);
        s.phase.push_back(nan);
        continue;
      }
      const Complex z = evaluate(space, coeffs, static_cast<std::size_t>(cell), ref).value;
      s.inside.push_back(1);
      s.modulus.push_back(std::abs(z));
      s.real.push_back(z.real());
      s.imag.push_back(z.imag());
      s.phase.push_back(sample_phase(z));
    }
  return s;
}

}  // namespace magauge
