#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "magauge/gauge.hpp"
#include "magauge/potentials.hpp"

using namespace magauge;

namespace {

std::shared_ptr<const FeSpace> neumann_space(const Mesh& mesh, int p) {
  auto m = std::make_shared<const Mesh>(mesh);
  return std::make_shared<const FeSpace>(m, p, uniform_bc(*m, BoundaryCondition::Neumann));
}

// int psi for -Delta psi = 1 on (-1,1)^2, psi = 0 on the boundary, by the
// double sine series; the tail beyond m,n < 4001 is below 1e-12.
double square_torsion_integral() {
  const double pi6 = std::pow(std::numbers::pi, 6);
  double s = 0.0;
  for (int m = 1; m < 4001; m += 2)
    for (int n = 1; n < 4001; n += 2) {
      const double m2 = double(m) * m, n2 = double(n) * n;
      s += 1024.0 / (pi6 * m2 * n2 * (m2 + n2));
    }
  return s;
}

// int psi_h for the Dirichlet FE solution of -Delta psi = 1.
double fe_torsion_integral(const Mesh& mesh, int p) {
  auto m = std::make_shared<const Mesh>(mesh);
  const FeSpace space(m, p, uniform_bc(*m, BoundaryCondition::Dirichlet));
  const auto pencil = assemble_magnetic_forms(space, potentials::zero());
  std::vector<Triplet<double>> t;
  for (int r = 0; r < pencil.K.rows(); ++r)
    for (int k = pencil.K.row_ptr()[r]; k < pencil.K.row_ptr()[r + 1]; ++k)
      t.push_back({r, pencil.K.col_idx()[k], pencil.K.values()[k].real()});
  const auto s = SparseMatrix<double>::from_triplets(pencil.K.rows(), pencil.K.cols(), t);
  const Vector<double> all = basis_integrals(space);
  Vector<double> b(pencil.size());
  for (int i = 0; i < pencil.size(); ++i) b[i] = all[space.free_dofs()[i]];
  const Vector<double> psi = factorize(s, FactorKind::SymmetricPositive).solve(b);
  return b.dot(psi);
}

}  // namespace

TEST_CASE("constant fields have a vanishing canonical gauge", "[gauge]") {
  const auto g = compute_canonical_gauge(neumann_space(generate_square(0.1), 3), potentials::constant(7.0, -3.0));
  CHECK(std::abs(g.norm_A - std::sqrt(58.0 * 4.0)) <= 1e-10);
  CHECK(g.norm_F <= 1e-8 * g.norm_A);
}

TEST_CASE("gradient fields in the FE space are removed exactly", "[gauge]") {
  // A = grad(x^2 y + y^3 / 3 - x), a cubic.
  VectorPotential a{"grad", [](const Vec2& x) { return Vec2{2 * x.x * x.y - 1.0, x.x * x.x + x.y * x.y}; },
                    [](const Vec2&) { return 0.0; }, true};
  const auto g = compute_canonical_gauge(neumann_space(generate_lshape(0.5), 3), a);
  CHECK(g.norm_F <= 1e-10 * g.norm_A);
  const auto r = gauge_diagnostics(g);
  CHECK(std::abs(r.mean_a) <= 1e-12);
}

TEST_CASE("canonical norm of A2 on the square matches the torsion series", "[gauge]") {
  const double oracle = std::sqrt(square_torsion_integral());
  CHECK(std::abs(oracle - 0.749872) <= 5e-7);
  const auto g = compute_canonical_gauge(neumann_space(generate_square(0.05), 3), potentials::a2());
  CHECK(std::abs(g.norm_A - std::sqrt(4.0 / 3.0)) <= 1e-12);
  CHECK(std::abs(g.norm_F - oracle) <= 5e-4);
  // a1, a2, a3 share their curl, hence their canonical field.
  const auto g1 = compute_canonical_gauge(neumann_space(generate_square(0.05), 3), potentials::a1());
  const auto g3 = compute_canonical_gauge(neumann_space(generate_square(0.05), 3), potentials::a3());
  CHECK(std::abs(g1.norm_F - g.norm_F) <= 1e-9);
  CHECK(std::abs(g3.norm_F - g.norm_F) <= 1e-9);
}

TEST_CASE("constant-curl norm on the L-shape agrees with a Dirichlet torsion solve", "[gauge]") {
  const Mesh mesh = generate_lshape(0.1);
  const auto g = compute_canonical_gauge(neumann_space(mesh, 3), potentials::ex4());
  const double torsion = 50.0 * std::sqrt(fe_torsion_integral(mesh, 3));
  CHECK(std::abs(g.norm_F - torsion) <= 1e-3 * torsion);
}

TEST_CASE("gauge diagnostics: Galerkin orthogonality and minimality", "[gauge]") {
  const Mesh mesh = generate_square(0.1);
  for (const auto& name : catalog_names()) {
    if (name == "constant(c1,c2)") continue;
    const auto a = builtin_potential(name);
    const auto g = compute_canonical_gauge(neumann_space(mesh, 3), a);
    const auto r = gauge_diagnostics(g);
    INFO(name);
    CHECK(g.norm_F <= g.norm_A * (1.0 + 1e-12));
    CHECK(r.galerkin_scaled <= 1e-8);
    CHECK(r.orthogonality <= 1e-8);
    CHECK(std::abs(r.mean_a) <= 1e-8 * std::max(1.0, r.norm_grad_a));
    // Pythagoras: ||A||^2 = ||F||^2 + ||grad a||^2 when F is orthogonal to grad a.
    CHECK(std::abs(g.norm_A * g.norm_A - g.norm_F * g.norm_F - r.norm_grad_a * r.norm_grad_a) <=
          1e-8 * g.norm_A * g.norm_A);
  }
}

TEST_CASE("adding a gradient leaves the canonical field unchanged", "[gauge]") {
  const Mesh mesh = generate_square(0.2);
  const auto a = potentials::ex1();
  VectorPotential shifted{"ex1+grad", [a](const Vec2& x) { return a(x) + Vec2{3 * x.x * x.x, 2.0}; }, a.curl, true};
  const auto g = compute_canonical_gauge(neumann_space(mesh, 3), a);
  const auto h = compute_canonical_gauge(neumann_space(mesh, 3), shifted);
  CHECK(std::abs(g.norm_F - h.norm_F) <= 1e-10 * g.norm_F);
  for (std::size_t c = 0; c < mesh.num_triangles(); c += 7) {
    const Vec2 fg = g.eval_F(c, {0.2, 0.3});
    const Vec2 fh = h.eval_F(c, {0.2, 0.3});
    CHECK(std::hypot(fg.x - fh.x, fg.y - fh.y) <= 1e-9 * g.norm_F);
  }
}

TEST_CASE("canonical norm does not increase under nested refinement", "[gauge]") {
  for (const char* name : {"ex1", "ex3", "a2"}) {
    Mesh mesh = generate_square(0.5);
    double prev = std::numeric_limits<double>::infinity();
    for (int level = 0; level < 4; ++level) {
      const auto g = compute_canonical_gauge(neumann_space(mesh, 2), builtin_potential(name));
      INFO(name << " level " << level);
      CHECK(g.norm_F <= prev * (1.0 + 1e-12));
      prev = g.norm_F;
      mesh = refine_uniform(mesh);
    }
  }
}

TEST_CASE("stored gradient polynomial reproduces the FE gradient", "[gauge]") {
  const auto space = neumann_space(generate_square(0.25), 3);
  const auto g = compute_canonical_gauge(space, potentials::ex2());
  std::vector<double> coeffs(g.a.data(), g.a.data() + g.a.size());
  for (std::size_t c = 0; c < space->num_cells(); c += 5)
    for (const Vec2 ref : {Vec2{0.1, 0.1}, Vec2{0.6, 0.2}, Vec2{0.0, 1.0}}) {
      const auto v = evaluate(*space, coeffs, c, ref);
      const Vec2 ga = g.grad_a(c, ref);
      CHECK(std::abs(ga.x - v.dx) <= 1e-9 * (1.0 + std::abs(v.dx)));
      CHECK(std::abs(ga.y - v.dy) <= 1e-9 * (1.0 + std::abs(v.dy)));
      const Vec2 f = g.field()(c, ref, space->mesh().cell_map(c).map(ref));
      const Vec2 e = g.eval_F(c, ref);
      CHECK(f.x == e.x);
      CHECK(f.y == e.y);
    }
}

TEST_CASE("canonical gauge requires an all-Neumann space", "[gauge]") {
  auto m = std::make_shared<const Mesh>(generate_square(0.5));
  auto space = std::make_shared<const FeSpace>(m, 2, uniform_bc(*m, BoundaryCondition::Dirichlet));
  CHECK_THROWS_AS(compute_canonical_gauge(space, potentials::a1()), std::invalid_argument);
}
