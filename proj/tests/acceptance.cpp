// Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion.
//
// Usage: acceptance [--expect-fail 6,7] [--keep <dir>]
// The exit status is 0 when the set of failing criteria equals the expected
// set; each line still reports the criterion's own verdict.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "magauge/dense_eig.hpp"
#include "magauge/experiment.hpp"

using namespace magauge;
namespace fs = std::filesystem;

namespace {

struct Slim {
  RunConfig config;
  std::vector<double> lambdas;
  HeuristicTable norms;
  std::optional<GaugeReport> gauge;
  StageTimes times;
  std::size_t dofs = 0;
};

struct Invariants {
  double rayleigh_identity = 0.0;  // pencil form
  double rayleigh_table = 0.0;     // norms table form
  std::string rayleigh_worst;
  double galerkin = 0.0;
  bool minimal = true;
  int runs = 0;
} g_inv;

fs::path g_root;

Slim run(const std::string& text, const std::string& keep_as = {}) {
  RunConfig cfg = RunConfig::parse_text("samples=0\n" + text);
  RunOutcome out = execute_run(cfg);
  if (!out.converged()) throw std::runtime_error("eigensolver did not converge for\n" + cfg.to_text());
  if (!keep_as.empty()) write_run(out, g_root / keep_as);
  g_inv.rayleigh_identity = std::max(g_inv.rayleigh_identity, rayleigh_identity_error(out.pencil, out.eig));
  for (const auto& r : out.norms.rows)
    if (r.rayleigh_error > g_inv.rayleigh_table) {
      g_inv.rayleigh_table = r.rayleigh_error;
      g_inv.rayleigh_worst = cfg.potential + " " + cfg.V + " " + to_string(cfg.gauge) + " h=" + format_double(cfg.h) +
                             " j=" + std::to_string(r.j) + " lambda=" + format_double(r.lambda);
    }
  if (out.gauge_report) {
    g_inv.galerkin = std::max(g_inv.galerkin, out.gauge_report->galerkin_scaled);
    g_inv.minimal = g_inv.minimal && out.gauge_report->norm_F <= out.gauge_report->norm_A * (1.0 + 1e-12);
  }
  ++g_inv.runs;
  return {out.config, out.eig.eigenvalues, out.norms, out.gauge_report, out.times, out.space->num_dofs()};
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

double max_rel(const std::vector<double>& got, const std::vector<double>& want) {
  double w = 0.0;
  for (std::size_t j = 0; j < want.size(); ++j) w = std::max(w, j < got.size() ? rel(got[j], want[j]) : INFINITY);
  return w;
}

std::string num(double v, int digits = 6) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string list(const std::vector<double>& v, int digits = 6) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + num(x, digits);
  return s;
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& note) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "" : "[x] ") + note);
  }
};

using Criterion = std::function<Verdict()>;

// 1
Verdict laplacian() {
  Verdict v;
  const auto r = run("potential=zero\nh=0.05\n");
  const double q = std::numbers::pi * std::numbers::pi / 4.0;
  const std::vector<double> want{2 * q, 5 * q, 5 * q, 8 * q, 10 * q, 10 * q};
  v.check(max_rel(r.lambdas, want) <= 1e-3, "max rel err " + num(max_rel(r.lambdas, want), 3) + " <= 1e-3");
  return v;
}

// 2
Verdict constant_gauge() {
  Verdict v;
  const auto base = run("potential=zero\nh=0.05\n");
  const auto orig = run("potential=constant(7,-3)\nh=0.05\n");
  const auto canon = run("potential=constant(7,-3)\ngauge=canonical\nh=0.05\n");
  v.check(max_rel(orig.lambdas, base.lambdas) <= 5e-3,
          "original gauge vs A=0: max rel " + num(max_rel(orig.lambdas, base.lambdas), 3) + " <= 5e-3");
  v.check(max_rel(canon.lambdas, base.lambdas) <= 5e-3,
          "canonical gauge vs A=0: max rel " + num(max_rel(canon.lambdas, base.lambdas), 3) + " <= 5e-3");
  const double ratio = canon.gauge->norm_F / canon.gauge->norm_A;
  v.check(ratio <= 1e-8, "||F||/||A|| = " + num(ratio, 3) + " <= 1e-8");
  return v;
}

// 3
Verdict small_norms() {
  Verdict v;
  const auto a1 = run("potential=a1\ngauge=canonical\nh=0.05\nk=1\n");
  const auto a2 = run("potential=a2\ngauge=canonical\nh=0.05\nk=1\n");
  v.check(std::abs(a1.gauge->norm_A - 0.816497) <= 1e-4, "||A1|| = " + num(a1.gauge->norm_A, 8));
  v.check(std::abs(a1.gauge->norm_A - std::sqrt(2.0 / 3.0)) <= 1e-12, "||A1|| vs sqrt(2/3) to 1e-12");
  v.check(std::abs(a2.gauge->norm_A - 1.1547) <= 1e-4, "||A2|| = " + num(a2.gauge->norm_A, 8));
  v.check(std::abs(a2.gauge->norm_F - 0.749872) <= 5e-4, "||F(A2)|| = " + num(a2.gauge->norm_F, 8) + " vs 0.749872");
  return v;
}

// 4
Verdict example1() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const auto c05 = run("potential=ex1\ngauge=canonical\nh=0.05\n", "ex1_canonical_h0.05");
  const auto c03 = run("potential=ex1\ngauge=canonical\nh=0.03\n", "ex1_canonical_h0.03");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run("potential=ex1\nh=0.05\n", "ex1_original_h0.05");
  run("potential=ex1\nh=0.03\n", "ex1_original_h0.03");
  v.check(rel(c05.gauge->norm_A, 178.8854) <= 1e-3, "||A|| = " + num(c05.gauge->norm_A, 8));
  v.check(rel(c05.gauge->norm_F, 70.3584) <= 5e-3, "||F|| = " + num(c05.gauge->norm_F, 8));
  const std::vector<double> p05{26.0736, 29.7487, 36.1300, 44.5101, 54.7189, 65.8232};
  const std::vector<double> p03{25.8557, 29.6875, 35.9519, 44.3811, 54.5375, 65.6622};
  v.check(max_rel(c05.lambdas, p05) <= 1e-2, "h=0.05 {" + list(c05.lambdas) + "} max rel " + num(max_rel(c05.lambdas, p05), 3));
  v.check(max_rel(c03.lambdas, p03) <= 1e-2, "h=0.03 {" + list(c03.lambdas) + "} max rel " + num(max_rel(c03.lambdas, p03), 3));
  const auto cmp = compare_runs({g_root / "ex1_canonical_h0.05", g_root / "ex1_canonical_h0.03", g_root / "ex1_original_h0.05",
                                 g_root / "ex1_original_h0.03"});
  const double sc = cmp.stability("canonical").value(), so = cmp.stability("original").value();
  v.check(sc < so, "s(0.05,0.03): canonical " + num(sc, 4) + " < original " + num(so, 4));
  v.check(secs <= 600.0, "canonical h=0.05 + h=0.03 wall " + num(secs, 3) + " s");
  return v;
}

// 5
Verdict example2a() {
  Verdict v;
  const auto r = run("potential=ex2\ngauge=canonical\nh=0.05\n");
  v.check(rel(r.gauge->norm_A, 130.6436) <= 1e-3, "||A|| = " + num(r.gauge->norm_A, 8));
  v.check(rel(r.gauge->norm_F, 89.8614) <= 5e-3, "||F|| = " + num(r.gauge->norm_F, 8));
  const std::vector<double> p{104.444, 112.211, 155.502, 179.126, 197.103, 197.141};
  v.check(max_rel(r.lambdas, p) <= 1e-2, "{" + list(r.lambdas) + "} max rel " + num(max_rel(r.lambdas, p), 3));
  const double gap = std::abs(r.lambdas[5] - r.lambdas[4]);
  v.check(gap < 0.1, "lambda6 - lambda5 = " + num(gap, 3) + " < 0.1");
  return v;
}

// 6
Verdict example3() {
  Verdict v;
  const auto orig = run("potential=ex3\nh=0.05\n");
  const auto canon = run("potential=ex3\ngauge=canonical\nh=0.05\n");
  v.check(std::abs(canon.gauge->norm_A - 200.0) <= 1e-6, "||A|| = " + num(canon.gauge->norm_A, 12));
  double worst = 0.0;
  for (const auto& row : orig.norms.rows) worst = std::max(worst, std::abs(row.norm_Gu - 100.0));
  v.check(worst <= 1e-6, "max_j | ||A psi_j|| - 100 | = " + num(worst, 3));
  const std::vector<double> p{96.688, 122.132, 129.168, 129.214, 144.567, 144.724};
  v.check(max_rel(canon.lambdas, p) <= 1.5e-2,
          "{" + list(canon.lambdas) + "} max rel " + num(max_rel(canon.lambdas, p), 3) + " <= 1.5e-2");
  return v;
}

// 7
Verdict example4() {
  Verdict v;
  const auto r = run("domain=lshape\npotential=ex4\ngauge=canonical\nbc=neumann\nh=0.05\n");
  const std::vector<double> p{24.6246, 24.6246, 25.4959, 26.8320, 26.8328, 30.3693};
  v.check(max_rel(r.lambdas, p) <= 2e-2, "{" + list(r.lambdas) + "} max rel " + num(max_rel(r.lambdas, p), 3) + " <= 2e-2");
  v.check(rel(r.gauge->norm_F, 30.9111) <= 1e-2, "||F|| = " + num(r.gauge->norm_F, 8) + " vs 30.9111");
  return v;
}

// 8
Verdict example2b() {
  Verdict v;
  constexpr std::uint64_t seed = 2024;
  const GridScalarPotential base(seed, 1.0);
  for (double vstar : {100.0, 500.0, 1000.0}) {
    const GridScalarPotential g(seed, vstar);
    bool prop = true;
    for (int j = 0; j < 16; ++j)
      for (int i = 0; i < 16; ++i)
        prop = prop && g.unit_value(i, j) == base.unit_value(i, j) && g.cell_value(i, j) == vstar * base.unit_value(i, j);
    v.check(prop, "V*=" + num(vstar) + " grid = V* x unit grid exactly");
    std::vector<double> gap[2];
    int level = 0;
    for (const char* h : {"0.05", "0.03"}) {
      const std::string common = "potential=ex2\nV=grid(" + std::to_string(seed) + "," + num(vstar) + ")\nh=" + h + "\n";
      const auto a = run(common);
      const auto f = run(common + "gauge=canonical\n");
      for (std::size_t j = 0; j < a.lambdas.size(); ++j) gap[level].push_back(std::abs(a.lambdas[j] - f.lambdas[j]));
      ++level;
    }
    bool shrink = true;
    for (std::size_t j = 0; j < gap[0].size(); ++j) shrink = shrink && gap[1][j] < gap[0][j];
    v.check(shrink, "V*=" + num(vstar) + " |lA-lF| h=0.05 {" + list(gap[0], 3) + "} -> h=0.03 {" + list(gap[1], 3) + "}");
  }
  return v;
}

// 9
Verdict oracle() {
  Verdict v;
  double worst = 0.0;
  int cases = 0;
  std::size_t max_dofs = 0;
  auto one = [&](const std::string& domain, const std::string& name, const std::string& bc, const std::string& gauge) {
    auto cfg = RunConfig::parse_text("samples=0\np=1\nh=0.2\nk=6\ntol=1e-12\n");
    cfg.set("domain", domain);
    cfg.set("potential", name);
    cfg.set("bc", bc);
    cfg.set("gauge", gauge);
    if (domain == "lshape") cfg.set("h", "0.25");
    const auto out = execute_run(cfg);
    max_dofs = std::max(max_dofs, static_cast<std::size_t>(out.pencil.size()));
    const auto dense = dense_oracle(out.pencil);
    const double floor = 1e-6 * std::abs(dense[5]);  // absolute floor for the Neumann null mode
    for (int j = 0; j < 6; ++j)
      worst = std::max(worst, std::abs(out.eig.eigenvalues[j] - dense[j]) / std::max(std::abs(dense[j]), floor));
    ++cases;
  };
  for (auto name : catalog_names()) {
    if (name == "constant(c1,c2)") name = "constant(7,-3)";
    for (const char* gauge : {"original", "canonical"}) {
      one("square", name, "dirichlet", gauge);
      one("square", name, "neumann", gauge);
    }
  }
  for (const char* gauge : {"original", "canonical"}) one("lshape", "ex4", "neumann", gauge);
  v.check(max_dofs <= static_cast<std::size_t>(kDenseOracleMaxSize), "largest pencil " + std::to_string(max_dofs) + " DOFs");
  v.check(worst <= 1e-8, std::to_string(cases) + " pencils, max rel diff " + num(worst, 3) + " <= 1e-8");
  return v;
}

// 10
Verdict invariants() {
  Verdict v;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n01;
  double herm = 0.0;
  bool spd = true;
  bool minimal = true;
  bool nested = true;
  std::string nested_note;
  for (auto name : catalog_names()) {
    if (name == "constant(c1,c2)") name = "constant(7,-3)";
    const auto a = builtin_potential(name);
    for (auto kind : {DomainKind::Square, DomainKind::LShape}) {
      auto mesh = std::make_shared<const Mesh>(kind == DomainKind::Square ? generate_square(0.1) : generate_lshape(0.1));
      const FeSpace space(mesh, 3, uniform_bc(*mesh, BoundaryCondition::Dirichlet));
      const auto p = assemble_magnetic_forms(space, a);
      herm = std::max({herm, hermitian_defect(p.K), hermitian_defect(p.M)});
      for (int t = 0; t < 10; ++t) {
        Vector<Complex> x(p.size());
        for (auto& xi : x) xi = Complex(n01(rng), n01(rng));
        spd = spd && x.dot(p.M * x).real() > 0.0;
      }
      const auto g = compute_canonical_gauge(
          std::make_shared<const FeSpace>(mesh, 3, uniform_bc(*mesh, BoundaryCondition::Neumann)), a);
      minimal = minimal && g.norm_F <= g.norm_A * (1.0 + 1e-12);
      // Coarser starts leave oscillatory fields unresolved by the quadrature.
      Mesh m = kind == DomainKind::Square ? generate_square(0.2) : generate_lshape(0.25);
      double prev = INFINITY;
      for (int level = 0; level < 3; ++level) {
        const auto gl = compute_canonical_gauge(
            std::make_shared<const FeSpace>(std::make_shared<const Mesh>(m), 3,
                                            uniform_bc(m, BoundaryCondition::Neumann)),
            a);
        if (gl.norm_F > prev + 1e-10 * gl.norm_A) {
          nested = false;
          nested_note += " " + name + "@" + std::to_string(level);
        }
        prev = gl.norm_F;
        m = refine_uniform(m);
      }
    }
  }
  v.check(herm <= 1e-14, "Hermitian defect of K, M " + num(herm, 3) + " <= 1e-14");
  v.check(spd, "x^H M x > 0 on random samples");
  v.check(g_inv.rayleigh_identity <= 1e-12 && g_inv.rayleigh_table <= 1e-12,
          "Rayleigh identity over " + std::to_string(g_inv.runs) + " runs: pencil " + num(g_inv.rayleigh_identity, 3) +
              ", quadrature " + num(g_inv.rayleigh_table, 3) + " <= 1e-12");
  v.check(g_inv.galerkin <= 1e-8, "Galerkin orthogonality (scaled) " + num(g_inv.galerkin, 3) + " <= 1e-8");
  v.check(minimal && g_inv.minimal, "||F|| <= ||A|| for every catalog field");
  v.check(nested, "||F_h|| non-increasing over 3 nested levels (slack 1e-10 ||A||)" + nested_note);
  for (const char* h : {"0.05", "0.03"}) {
    double gauge = INFINITY, eig = INFINITY;
    for (int rep = 0; rep < 3; ++rep) {
      const auto r = run(std::string("potential=ex1\ngauge=canonical\nh=") + h + "\n");
      gauge = std::min(gauge, r.times.gauge);
      eig = std::min(eig, r.times.eigensolve);
    }
    v.check(gauge <= 0.1 * eig, std::string("h=") + h + " gauge " + num(gauge, 3) + " s vs eigensolve " + num(eig, 3) +
                                    " s, ratio " + num(gauge / eig, 3));
  }
  return v;
}

std::set<int> parse_ids(const std::string& s) {
  std::set<int> out;
  std::stringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');)
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> expected;
  fs::path keep;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--expect-fail" && i + 1 < argc) expected = parse_ids(argv[++i]);
    else if (a == "--keep" && i + 1 < argc) keep = argv[++i];
    else {
      std::cerr << "usage: acceptance [--expect-fail 6,7] [--keep <dir>]\n";
      return 2;
    }
  }
  g_root = keep.empty() ? fs::temp_directory_path() / ("magauge_acceptance_" + std::to_string(::getpid())) : keep;
  fs::create_directories(g_root);

  const std::vector<std::pair<const char*, Criterion>> criteria = {
      {"Laplacian sanity", laplacian},
      {"constant-gauge invariance", constant_gauge},
      {"A1, A2 and canonical A2 norms", small_norms},
      {"Example 1", example1},
      {"Example 2a", example2a},
      {"Example 3 base domain", example3},
      {"Example 4 L-shape Neumann", example4},
      {"Example 2b random potential", example2b},
      {"dense oracle equivalence", oracle},
      {"invariant suite", invariants},
  };
  std::set<int> failed;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) failed.insert(id);
    std::printf("%s criterion %d: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, secs);
    for (const auto& n : v.notes) std::printf("       %s\n", n.c_str());
    std::fflush(stdout);
  }
  if (keep.empty()) fs::remove_all(g_root);
  const bool as_expected = failed == expected;
  std::printf("%zu/%zu criteria pass; failing set %s the expected set\n", criteria.size() - failed.size(), criteria.size(),
              as_expected ? "matches" : "differs from");
  return as_expected ? 0 : 1;
}
