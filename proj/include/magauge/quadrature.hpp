#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geometry.hpp"

namespace magauge {

/// Quadrature on the reference triangle (0,0),(1,0),(0,1). Weights sum to 1/2.
struct QuadRule {
  std::vector<Vec2> points;
  std::vector<double> weights;
  int degree = 0;

  std::size_t size() const { return points.size(); }
};

/// Gauss-Legendre rule on [0,1]; weights sum to 1.
struct LineRule {
  std::vector<double> points;
  std::vector<double> weights;
};

namespace detail {

// Fully symmetric orbit: centroid (S3), (a,a,1-2a) (S21) or all permutations
// of (a,b,1-a-b) (S111). w is the weight of each point of the orbit; weights
// are normalised to sum to 1 over the rule.
struct Orbit {
  int kind;  // 0 = S3, 1 = S21, 2 = S111
  double a, b, w;
};

struct OrbitTable {
  int degree;
  std::vector<Orbit> orbits;
};

// Positive-interior symmetric rules of the Dunavant (1985) family. Degrees 3,
// 7 and 11 of that family have negative weights or exterior points and are
// skipped; requests for them get the next higher rule.
inline const std::vector<OrbitTable>& orbit_tables() {
  static const std::vector<OrbitTable> tables = {
      {1, {{0, 0, 0, 1.0}}},
      {2, {{1, 1.0 / 6.0, 0, 1.0 / 3.0}}},
      {4,
       {{1, 0.44594849091596488631832925388305, 0, 0.22338158967801146569500700843312},
        {1, 0.09157621350977074345957146340220, 0, 0.10995174365532186763832632490021}}},
      {5,
       {{0, 0, 0, 0.225},
        {1, 0.47014206410511508977044120951345, 0, 0.13239415278850618073764938783315},
        {1, 0.10128650732345633880098736191512, 0, 0.12593918054482715259568394550018}}},
      {6,
       {{1, 0.24928674517091042129163855310702, 0, 0.11678627572637936602528961138558},
        {1, 0.06308901449150222834033160287082, 0, 0.05084490637020681692093680910686},
        {2, 0.31035245103378440541660773395655, 0.63650249912139864723014259441205,
         0.08285107561837357519355345642044}}},
      {8,
       {{0, 0, 0, 0.14431560767778716825109111048906},
        {1, 0.17056930775176020662229350149146, 0, 0.10321737053471825028179155029212},
        {1, 0.05054722831703097545842355059660, 0, 0.03245849762319808031092592834178},
        {1, 0.45929258829272315602881551449417, 0, 0.09509163426728462479389610438858},
        {2, 0.26311282963463811342178578628464, 0.72849239295540428124100037917606,
         0.02723031417443499426484469007390}}},
      {9,
       {{0, 0, 0, 0.09713579628279609890744676309485},
        {1, 0.48968251919873762778370692483619, 0, 0.03133470022713983234393199080984},
        {1, 0.43708959149293663726993036443535, 0, 0.07782754100477543338465495857972},
        {1, 0.18820353561903273024096128046733, 0, 0.07964773892720910288013526957424},
        {1, 0.04472951339445297061024247196780, 0, 0.02557767565869810438673914467637},
        {2, 0.22196298916076569567510252769319, 0.74119859878449802069007987352342,
         0.04328353937728937728937728937729}}},
      {10,
       {{0, 0, 0, 0.0908179903827535800952865951000284},
        {1, 0.485577633383657377367507532208126, 0, 0.0367259577564667047170060718913664},
        {1, 0.109481575485037054795458631340522, 0, 0.0453210594355279347826056447385972},
        {2, 0.141707219414879954756683250476361, 0.307939838764120950165155022930631,
         0.0727579168454201086043151766193606},
        {2, 0.025003534762686386073988481007746, 0.246672560639902693917276465411176,
         0.0283272425310574848367370615820990},
        {2, 0.0095408154002994575801528096228873, 0.0668032510122002657735402127620247,
         0.00942166696373282345992747096688682}}},
      {12,
       {{1, 0.488217389773805, 0, 0.025731066440455},
        {1, 0.439724392294460, 0, 0.043692544538038},
        {1, 0.271210385012116, 0, 0.062858224217885},
        {1, 0.127576145541586, 0, 0.034796112930709},
        {1, 0.021317350453210, 0, 0.006166261051559},
        {2, 0.115343494534698, 0.275713269685514, 0.040371557766381},
        {2, 0.022838332222257, 0.281325580989940, 0.022356773202303},
        {2, 0.025734050548330, 0.116251915907597, 0.017316231108659}}},
  };
  return tables;
}

inline void expand_orbits(const std::vector<Orbit>& orbits, QuadRule& rule) {
  rule.points.clear();
  rule.weights.clear();
  auto add = [&](double l1, double l2, double w) {
    rule.points.push_back({l1, l2});
    rule.weights.push_back(0.5 * w);
  };
  for (const auto& o : orbits) {
    switch (o.kind) {
      case 0: add(1.0 / 3.0, 1.0 / 3.0, o.w); break;
      case 1: {
        const double c = 1.0 - 2.0 * o.a;
        add(o.a, o.a, o.w);
        add(o.a, c, o.w);
        add(c, o.a, o.w);
        break;
      }
      default: {
        const double c = 1.0 - o.a - o.b;
        add(o.a, o.b, o.w); add(o.b, o.a, o.w);
        add(o.b, c, o.w);   add(c, o.b, o.w);
        add(o.a, c, o.w);   add(c, o.a, o.w);
      }
    }
  }
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Relative moment residuals (sum_q w_q x^i y^j) / m_ij - 1 for i + j <= degree,
/// where m_ij = i! j! / (i+j+2)! is the exact integral.
inline Eigen::VectorXd moment_residual(const QuadRule& rule, int degree) {
  Eigen::VectorXd r((degree + 1) * (degree + 2) / 2);
  int row = 0;
  for (int total = 0; total <= degree; ++total)
    for (int i = total; i >= 0; --i) {
      const int j = total - i;
      double s = 0.0;
      for (std::size_t q = 0; q < rule.size(); ++q)
        s += rule.weights[q] * std::pow(rule.points[q].x, i) * std::pow(rule.points[q].y, j);
      r[row++] = s / (factorial(i) * factorial(j) / factorial(i + j + 2)) - 1.0;
    }
  return r;
}

/// Gauss-Newton refinement of the orbit parameters against the exact moments,
/// lifting tabulated values to full double precision. Keeps the best iterate.
inline std::vector<Orbit> polish(std::vector<Orbit> orbits, int degree) {
  std::vector<double*> params;
  for (auto& o : orbits) {
    params.push_back(&o.w);
    if (o.kind >= 1) params.push_back(&o.a);
    if (o.kind == 2) params.push_back(&o.b);
  }
  QuadRule rule;
  auto residual = [&] {
    expand_orbits(orbits, rule);
    return moment_residual(rule, degree);
  };
  std::vector<Orbit> best = orbits;
  double best_err = residual().cwiseAbs().maxCoeff();
  for (int iter = 0; iter < 8 && best_err > 1e-15; ++iter) {
    const Eigen::VectorXd r0 = residual();
    Eigen::MatrixXd jac(r0.size(), static_cast<Eigen::Index>(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double saved = *params[k];
      const double step = 1e-6 * std::max(1e-2, std::abs(saved));
      *params[k] = saved + step;
      const Eigen::VectorXd rp = residual();
      *params[k] = saved - step;
      const Eigen::VectorXd rm = residual();
      *params[k] = saved;
      jac.col(static_cast<Eigen::Index>(k)) = (rp - rm) / (2 * step);
    }
    const Eigen::VectorXd delta = jac.colPivHouseholderQr().solve(-r0);
    for (std::size_t k = 0; k < params.size(); ++k) *params[k] += delta[static_cast<Eigen::Index>(k)];
    const double err = residual().cwiseAbs().maxCoeff();
    if (err < best_err) {
      best_err = err;
      best = orbits;
    }
  }
  return best;
}

}  // namespace detail

inline constexpr int kMaxQuadDegree = 12;

/// Symmetric triangle rule exact to total degree >= d, 1 <= d <= 12.
inline const QuadRule& quad_rule(int d) {
  if (d < 1 || d > kMaxQuadDegree)
    throw std::invalid_argument("quadrature exactness " + std::to_string(d) + " outside [1, 12]");
  static const std::vector<QuadRule> rules = [] {
    std::vector<QuadRule> out;
    for (const auto& table : detail::orbit_tables()) {
      QuadRule r;
      detail::expand_orbits(detail::polish(table.orbits, table.degree), r);
      r.degree = table.degree;
      out.push_back(std::move(r));
    }
    return out;
  }();
  for (const auto& r : rules)
    if (r.degree >= d) return r;
  return rules.back();
}

/// n-point Gauss-Legendre rule mapped to [0,1].
inline LineRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Legendre rule needs n >= 1");
  LineRule rule;
  rule.points.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.points[n - 1 - i] = 0.5 * (x + 1.0);
    rule.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

}  // namespace magauge
