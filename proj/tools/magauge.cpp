#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "magauge/experiment.hpp"

namespace fs = std::filesystem;
using namespace magauge;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int cmd_run(const std::string& config_path, const std::string& output, const std::vector<std::string>& overrides,
            bool quiet) {
  RunConfig cfg;
  std::string text;
  try {
    text = read_file(config_path);
    cfg = RunConfig::parse_text(text, fs::path(config_path).parent_path());
    for (const auto& kv : overrides) cfg.set(kv);
    if (!output.empty()) cfg.output = output;
    cfg.validate();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (!overrides.empty() || !output.empty()) text = cfg.to_text();
  try {
    const RunOutcome run = run_experiment(cfg, text);
    for (const auto& w : run.warnings) std::cerr << "warning: " << w << '\n';
    if (!quiet) {
      std::cout << "dofs " << run.space->num_dofs() << " (free " << run.space->num_free() << "), h_max "
                << format_double(run.mesh->h_max) << '\n';
      if (run.gauge) std::cout << "||A|| " << format_double(run.gauge->norm_A) << "  ||F|| " << format_double(run.gauge->norm_F) << '\n';
      for (std::size_t j = 0; j < run.eig.size(); ++j)
        std::cout << "lambda_" << j + 1 << " = " << format_double(run.eig.eigenvalues[j]) << '\n';
      std::cout << "wrote " << fs::absolute(cfg.output).lexically_normal().string() << '\n';
    }
    if (!run.converged()) {
      std::cerr << "numerical failure: eigensolver did not converge (outputs flagged not-converged)\n";
      return kExitNumerical;
    }
    return 0;
  } catch (const RunError& e) {
    std::cerr << (e.kind() == RunError::Kind::Config ? "config error in " : "numerical failure in ") << e.what() << '\n';
    return e.exit_code();
  }
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& output) {
  try {
    std::vector<fs::path> paths(dirs.begin(), dirs.end());
    const Comparison c = compare_runs(paths);
    if (output.empty()) {
      write_comparison(std::cout, c);
    } else {
      std::ofstream f(output);
      write_comparison(f, c);
      f.close();
      if (!f) throw ConfigError("cannot write '" + output + "'");
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_mesh_info(const std::string& path) {
  try {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    MeshReport report;
    const Mesh mesh = load_mesh(in, &report);
    double area = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) area += 0.5 * std::abs(mesh.cell_map(t).det);
    std::map<int, std::size_t> markers;
    for (const auto& b : mesh.boundary_edges) ++markers[b.marker];
    std::cout << "vertices " << mesh.num_vertices() << '\n'
              << "triangles " << mesh.num_triangles() << '\n'
              << "boundary_edges " << mesh.boundary_edges.size() << '\n'
              << "h_max " << format_double(mesh.h_max) << '\n'
              << "area " << format_double(area) << '\n'
              << "holes " << 1 - euler_characteristic(mesh) << '\n'
              << "reoriented " << report.reoriented << '\n';
    for (const auto& [m, n] : markers) std::cout << "marker " << m << " edges " << n << '\n';
    return 0;
  } catch (const MeshError& e) {
    std::cerr << "mesh error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

int cmd_catalog() {
  std::cout << "catalog_version " << kCatalogVersion << '\n';
  for (const auto& name : catalog_names()) {
    if (name == "constant(c1,c2)") {
      std::cout << name << "  curl 0, any real c1 c2\n";
      continue;
    }
    const VectorPotential a = builtin_potential(name);
    std::cout << name << "  curl(0,0)=" << format_double(eval_curl(a, {0.0, 0.0}))
              << (a.polynomial ? "  polynomial" : "  trigonometric") << '\n';
  }
  std::cout << "V: none | grid(seed,vstar)  16x16 cells on (-1,1)^2\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnetic Schrodinger eigenpairs with the canonical gauge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kLibraryVersion);

  std::string config_path, output;
  std::vector<std::string> overrides;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one experiment from a key=value config");
  run->add_option("--config,-c", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--output,-o", output, "Run directory (overrides the output key)");
  run->add_option("--set", overrides, "Override a config key, key=value")->take_all();
  run->add_flag("--quiet,-q", quiet, "Print nothing on success");

  std::vector<std::string> dirs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Compare eigenvalues across run directories");
  compare->add_option("dirs", dirs, "Run directories")->required()->expected(2, -1);
  compare->add_option("--output,-o", compare_out, "Write the CSV here instead of stdout");

  std::string mesh_path;
  auto* info = app.add_subcommand("mesh-info", "Validate a mesh file and print its statistics");
  info->add_option("file", mesh_path, "Mesh file")->required();

  auto* catalog = app.add_subcommand("catalog", "List built-in potentials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (*run) return cmd_run(config_path, output, overrides, quiet);
  if (*compare) return cmd_compare(dirs, compare_out);
  if (*info) return cmd_mesh_info(mesh_path);
  if (*catalog) return cmd_catalog();
  return kExitConfig;
}
