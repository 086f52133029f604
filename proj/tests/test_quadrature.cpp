#include <catch_amalgamated.hpp>

#include <cmath>

#include "magauge/quadrature.hpp"

using namespace magauge;

namespace {

// Exact monomial integral over the reference triangle: a! b! / (a+b+2)!.
double exact_monomial(int a, int b) {
  double num = 1.0;
  for (int i = 2; i <= a; ++i) num *= i;
  for (int i = 2; i <= b; ++i) num *= i;
  double den = 1.0;
  for (int i = 2; i <= a + b + 2; ++i) den *= i;
  return num / den;
}

double integrate(const QuadRule& r, int a, int b) {
  double s = 0.0;
  for (std::size_t q = 0; q < r.size(); ++q) s += r.weights[q] * std::pow(r.points[q].x, a) * std::pow(r.points[q].y, b);
  return s;
}

}  // namespace

TEST_CASE("degree 1 is the centroid rule", "[quad]") {
  const auto& r = quad_rule(1);
  REQUIRE(r.size() == 1);
  CHECK(r.weights[0] == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(r.points[0].x == Catch::Approx(1.0 / 3.0));
  CHECK(r.points[0].y == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("degree 2 rule has three points and integrates quadratics", "[quad]") {
  const auto& r = quad_rule(2);
  CHECK(r.size() == 3);
  CHECK(std::abs(integrate(r, 2, 0) - 1.0 / 12.0) <= 1e-15);
  CHECK(std::abs(integrate(r, 1, 1) - 1.0 / 24.0) <= 1e-15);
}

TEST_CASE("every rule is exact to its requested degree", "[quad]") {
  for (int d = 1; d <= kMaxQuadDegree; ++d) {
    const auto& r = quad_rule(d);
    CHECK(r.degree >= d);
    double wsum = 0.0;
    for (double w : r.weights) {
      CHECK(w > 0.0);
      wsum += w;
    }
    CHECK(std::abs(wsum - 0.5) <= 1e-15);
    for (const auto& p : r.points) {
      CHECK(p.x > 0.0);
      CHECK(p.y > 0.0);
      CHECK(p.x + p.y < 1.0);
    }
    for (int total = 0; total <= d; ++total)
      for (int a = 0; a <= total; ++a) {
        const double exact = exact_monomial(a, total - a);
        INFO("d=" << d << " a=" << a << " b=" << total - a);
        CHECK(std::abs(integrate(r, a, total - a) - exact) <= 1e-13 * exact);
      }
  }
}

TEST_CASE("degree 10 integrates x^5 y^5", "[quad]") {
  const double exact = exact_monomial(5, 5);
  CHECK(std::abs(integrate(quad_rule(10), 5, 5) - exact) <= 1e-13 * exact);
}

TEST_CASE("out-of-range exactness is rejected", "[quad]") {
  CHECK_THROWS_AS(quad_rule(13), std::invalid_argument);
  CHECK_THROWS_AS(quad_rule(0), std::invalid_argument);
}

TEST_CASE("Gauss-Legendre integrates polynomials of degree 2n-1", "[quad]") {
  for (int n = 1; n <= 8; ++n) {
    const auto r = gauss_legendre(n);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += r.weights[i] * std::pow(r.points[i], k);
      CHECK(std::abs(s - 1.0 / (k + 1)) <= 1e-14);
    }
  }
}
