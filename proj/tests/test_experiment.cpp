#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "magauge/experiment.hpp"

using namespace magauge;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("magauge_test_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Coarse base config; each line of extra overrides one key.
RunConfig small(const std::string& extra = {}) {
  auto c = RunConfig::parse_text("h=0.25\np=2\nk=4\nsamples=11\n");
  std::istringstream in(extra);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) c.set(l);
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("git blob hashes match git", "[experiment]") {
  // git hash-object on an empty file and on "hello\n".
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("doubles are written with 17 significant digits", "[experiment]") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("config parsing accepts documented keys", "[experiment]") {
  const auto c = RunConfig::parse_text(
      "# Example 4\n"
      "domain = lshape\n"
      "potential=ex4   # constant curl\n"
      "gauge=canonical\n"
      "bc=neumann\n"
      "h=0.05\n"
      "shift=-2.5\n"
      "align_grid=false\n");
  CHECK(c.domain == DomainKind::LShape);
  CHECK(c.potential == "ex4");
  CHECK(c.gauge == GaugeMode::Canonical);
  CHECK(c.bc.to_string() == "neumann");
  CHECK(c.shift == -2.5);
  CHECK_FALSE(c.align_grid);
  CHECK(c.k == 6);
  // Normalized text round-trips.
  const auto again = RunConfig::parse_text(c.to_text());
  CHECK(again.to_text() == c.to_text());
}

TEST_CASE("config errors are reported", "[experiment]") {
  CHECK_THROWS_AS(RunConfig::parse_text("colour=blue\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("h=0.1\nh=0.2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("h=abc\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("k=0\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("potential=ex9\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("V=grid(1)\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("V=grid(1,-3)\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("bc=1:robin\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("domain=file\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("domain=lshape\nV=grid(1,100)\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("p=4\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("samples=1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("just text\n"), ConfigError);
}

TEST_CASE("marker-wise boundary conditions", "[experiment]") {
  const BcSpec spec = BcSpec::parse("1:dirichlet, 2:neumann");
  CHECK(spec.to_string() == "1:dirichlet,2:neumann");
  Mesh mesh = generate_square(0.5);
  CHECK(spec.resolve(mesh).at(1) == BoundaryCondition::Dirichlet);
  CHECK_THROWS_AS(BcSpec::parse("2:neumann").resolve(mesh), ConfigError);
}

TEST_CASE("run directory holds every output", "[experiment]") {
  auto cfg = small("potential=ex1\ngauge=canonical\n");
  cfg.output = scratch("canon");
  const auto run = run_experiment(cfg);
  CHECK(run.converged());
  for (const char* f : {"eigenvalues.csv", "norms.csv", "gauge.csv", "timing.csv", "manifest"})
    CHECK(fs::exists(cfg.output / f));
  for (int j = 1; j <= 4; ++j) CHECK(fs::exists(cfg.output / "samples" / ("eig_" + std::to_string(j) + ".csv")));
  const auto ev = lines(cfg.output / "eigenvalues.csv");
  REQUIRE(ev.size() == 5);
  CHECK(ev[0] == "j,lambda,residual");
  CHECK(std::stod(ev[1].substr(2)) == run.eig.eigenvalues[0]);
  const auto timing = lines(cfg.output / "timing.csv");
  REQUIRE(timing.size() == 7);
  CHECK(timing[1].rfind("mesh,", 0) == 0);
  CHECK(timing[6].rfind("total,", 0) == 0);
  const auto samples = lines(cfg.output / "samples" / "eig_1.csv");
  CHECK(samples.size() == 1 + 11 * 11);
  const auto summary = load_run(cfg.output);
  CHECK(summary.get("config.gauge") == "canonical");
  CHECK(summary.get("mesh.sha1") == run.mesh_sha1);
  CHECK(summary.get("status") == "ok");
  CHECK(summary.lambdas == run.eig.eigenvalues);
  // No temporary directories are left next to the run.
  for (const auto& e : fs::directory_iterator(cfg.output.parent_path()))
    CHECK(e.path().filename().string().find(".tmp-") == std::string::npos);
}

TEST_CASE("original-gauge runs omit gauge.csv", "[experiment]") {
  auto cfg = small("potential=a1\nsamples=0\n");
  cfg.output = scratch("orig");
  run_experiment(cfg);
  CHECK_FALSE(fs::exists(cfg.output / "gauge.csv"));
  CHECK_FALSE(fs::exists(cfg.output / "samples"));
  const auto norms = lines(cfg.output / "norms.csv");
  CHECK(std::stod(norms[1].substr(norms[1].rfind(',') + 1)) == Catch::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("identical configs give identical eigenvalue files", "[experiment]") {
  auto a = small("potential=ex2\ngauge=canonical\nsamples=0\n");
  auto b = a;
  a.output = scratch("det_a");
  b.output = scratch("det_b");
  run_experiment(a);
  run_experiment(b);
  CHECK(lines(a.output / "eigenvalues.csv") == lines(b.output / "eigenvalues.csv"));
  const auto c = compare_runs({a.output, b.output});
  for (const auto& r : c.rows) CHECK(r.value == 0.0);
}

TEST_CASE("failed runs leave no output behind", "[experiment]") {
  auto cfg = small("potential=ex1\nk=500\n");
  cfg.output = scratch("fail");
  try {
    run_experiment(cfg);
    FAIL("expected a RunError");
  } catch (const RunError& e) {
    CHECK(e.stage() == "eigensolve");
    CHECK(e.exit_code() == 2);
  }
  CHECK_FALSE(fs::exists(cfg.output));
}

TEST_CASE("mesh errors are attributed to the mesh stage", "[experiment]") {
  const fs::path bad = scratch("bad.msh");
  std::ofstream(bad) << "3 1 3\n0 0\n1 0\n";
  auto cfg = RunConfig::parse_text("domain=file\nmesh_file=" + bad.string() + "\n");
  try {
    execute_run(cfg);
    FAIL("expected a RunError");
  } catch (const RunError& e) {
    CHECK(e.stage() == "mesh");
    CHECK(e.kind() == RunError::Kind::Config);
  }
}

TEST_CASE("mesh files are hashed and used as given", "[experiment]") {
  const fs::path file = scratch("square.msh");
  {
    std::ofstream out(file);
    write_mesh(out, generate_square(0.25));
  }
  auto cfg = RunConfig::parse_text("domain=file\nmesh_file=" + file.string() + "\nh=0.25\np=2\nk=3\nsamples=0\n");
  const auto run = execute_run(cfg);
  CHECK(run.mesh_file_sha1 == git_blob_sha1(read_file(file)));
  CHECK(run.mesh_file_sha1 == run.mesh_sha1);
  auto gen = small("k=3\nsamples=0\n");
  const auto ref = execute_run(gen);
  for (int j = 0; j < 3; ++j) CHECK(run.eig.eigenvalues[j] == Catch::Approx(ref.eig.eigenvalues[j]).epsilon(1e-12));
}

TEST_CASE("grid potentials align the square mesh", "[experiment]") {
  auto aligned = small("V=grid(3,100)\nsamples=0\n");
  const auto a = execute_run(aligned);
  CHECK(a.cells_per_side % 16 == 0);
  CHECK(a.warnings.empty());
  auto loose = small("V=grid(3,100)\nsamples=0\nalign_grid=false\n");
  const auto b = execute_run(loose);
  CHECK(b.cells_per_side == 8);
  REQUIRE(b.warnings.size() == 1);
  CHECK(b.warnings[0].find("16x16") != std::string::npos);
}

TEST_CASE("degenerate clusters are flagged", "[experiment]") {
  const auto c = detail::degenerate_clusters({1.0, 2.0, 2.0 + 1e-9, 2.0 + 2e-9, 5.0, 7.0, 7.0}, 1e-6);
  REQUIRE(c.size() == 2);
  CHECK(c[0] == std::pair<int, int>{2, 4});
  CHECK(c[1] == std::pair<int, int>{6, 7});
  // The zero potential square has lambda_2 = lambda_3 exactly in the continuum.
  auto cfg = small("samples=0\n");
  cfg.h = 0.1;
  const auto run = execute_run(cfg);
  REQUIRE_FALSE(run.degenerate_clusters.empty());
  CHECK(run.degenerate_clusters[0] == std::pair<int, int>{2, 3});
}

TEST_CASE("compare computes differences and stability", "[experiment]") {
  auto coarse = small("potential=a2\nsamples=0\n");
  auto fine = coarse;
  fine.h = 0.125;
  auto canon = coarse;
  canon.gauge = GaugeMode::Canonical;
  coarse.output = scratch("cmp_coarse");
  fine.output = scratch("cmp_fine");
  canon.output = scratch("cmp_canon");
  const auto rc = run_experiment(coarse);
  const auto rf = run_experiment(fine);
  run_experiment(canon);
  const auto c = compare_runs({coarse.output, fine.output, canon.output});
  double s = 0.0;
  for (int j = 0; j < 4; ++j) s = std::max(s, std::abs(rc.eig.eigenvalues[j] - rf.eig.eigenvalues[j]));
  REQUIRE(c.stability("original"));
  CHECK(*c.stability("original") == s);
  CHECK_FALSE(c.stability("canonical"));
  std::size_t max_rows = 0;
  for (const auto& r : c.rows) max_rows += r.metric == "max";
  CHECK(max_rows == 2);
  std::ostringstream csv;
  write_comparison(csv, c);
  CHECK(csv.str().rfind("metric,run_a,run_b,gauge_a,gauge_b,h_a,h_b,j,lambda_a,lambda_b,value\n", 0) == 0);

  auto other = small("potential=ex1\nsamples=0\n");
  other.output = scratch("cmp_other");
  run_experiment(other);
  CHECK_THROWS_AS(compare_runs({coarse.output, other.output}), ConfigError);
  CHECK_THROWS_AS(compare_runs({coarse.output}), ConfigError);
}
