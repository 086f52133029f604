#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "assemble.hpp"
#include "diagnostics.hpp"
#include "eig.hpp"
#include "fe_space.hpp"
#include "gauge.hpp"
#include "mesh.hpp"
#include "potentials.hpp"

namespace magauge {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kRunFormat = "magauge-run 1";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Error raised by a run, tagged with the stage that failed.
class RunError : public std::runtime_error {
 public:
  enum class Kind { Config, Numerical };

  RunError(std::string stage, Kind kind, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)), kind_(kind) {}

  const std::string& stage() const { return stage_; }
  Kind kind() const { return kind_; }
  int exit_code() const { return kind_ == Kind::Config ? 2 : 3; }

 private:
  std::string stage_;
  Kind kind_;
};

// ---------------------------------------------------------------------------
// Formatting and hashing
// ---------------------------------------------------------------------------

/// Shortest round-trip form is not required; 17 significant digits always are.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << std::setprecision(17) << v;
  return s.str();
}

inline std::string hex_digest(const unsigned char* d, unsigned n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < n; ++i) {
    out += kHex[d[i] >> 4];
    out += kHex[d[i] & 15];
  }
  return out;
}

/// SHA-1 of "blob <size>\0<content>", the object id git assigns to a file.
inline std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 digest failed");
  return hex_digest(digest, len);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("key '" + key + "': '" + text + "' is not a valid number");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = lower(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("key '" + key + "': '" + text + "' is not a boolean");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline BoundaryCondition parse_bc_kind(const std::string& text) {
  const std::string t = lower(text);
  if (t == "dirichlet") return BoundaryCondition::Dirichlet;
  if (t == "neumann") return BoundaryCondition::Neumann;
  throw ConfigError("boundary condition '" + text + "' is neither dirichlet nor neumann");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class GaugeMode { Original, Canonical };

inline const char* to_string(GaugeMode g) { return g == GaugeMode::Canonical ? "canonical" : "original"; }

inline const char* to_string(DomainKind k) {
  switch (k) {
    case DomainKind::Square: return "square";
    case DomainKind::LShape: return "lshape";
    case DomainKind::File: return "file";
  }
  return "?";
}

/// Boundary conditions by marker; `uniform` applies to every marker present.
struct BcSpec {
  std::optional<BoundaryCondition> uniform = BoundaryCondition::Dirichlet;
  std::map<int, BoundaryCondition> by_marker;

  static BcSpec parse(const std::string& text) {
    BcSpec spec;
    const std::string t = detail::trim(text);
    if (detail::lower(t) == "dirichlet" || detail::lower(t) == "neumann") {
      spec.uniform = detail::parse_bc_kind(t);
      return spec;
    }
    spec.uniform.reset();
    for (const auto& item : detail::split(t, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ConfigError("bc entry '" + item + "' must read marker:kind");
      const int marker = detail::parse_number<int>("bc", detail::trim(item.substr(0, colon)));
      if (!spec.by_marker.emplace(marker, detail::parse_bc_kind(detail::trim(item.substr(colon + 1)))).second)
        throw ConfigError("bc marker " + std::to_string(marker) + " listed twice");
    }
    if (spec.by_marker.empty()) throw ConfigError("bc is empty");
    return spec;
  }

  BcAssignment resolve(const Mesh& mesh) const {
    if (uniform) return uniform_bc(mesh, *uniform);
    BcAssignment out(by_marker.begin(), by_marker.end());
    for (const auto& be : mesh.boundary_edges)
      if (!out.contains(be.marker))
        throw ConfigError("boundary marker " + std::to_string(be.marker) + " has no entry in bc");
    return out;
  }

  std::string to_string() const {
    if (uniform) return *uniform == BoundaryCondition::Dirichlet ? "dirichlet" : "neumann";
    std::string s;
    for (const auto& [m, kind] : by_marker) {
      if (!s.empty()) s += ',';
      s += std::to_string(m) + (kind == BoundaryCondition::Dirichlet ? ":dirichlet" : ":neumann");
    }
    return s;
  }
};

/// Parses "none" or "grid(seed,vstar)".
inline ScalarPotential parse_scalar_potential(const std::string& text) {
  const std::string t = detail::trim(text);
  if (t == "none") return ScalarPotential::none();
  if (t.rfind("grid(", 0) == 0 && t.back() == ')') {
    const auto args = detail::split(t.substr(5, t.size() - 6), ',');
    if (args.size() == 2) {
      const auto seed = detail::parse_number<std::uint64_t>("V", args[0]);
      const auto vstar = detail::parse_number<double>("V", args[1]);
      if (!(vstar > 0.0) || !std::isfinite(vstar)) throw ConfigError("V: vstar must be positive");
      return ScalarPotential::random_grid(seed, vstar);
    }
  }
  throw ConfigError("V '" + text + "' is neither none nor grid(seed,vstar)");
}

/// One experiment. Text form: one key=value per line, '#' starts a comment.
struct RunConfig {
  DomainKind domain = DomainKind::Square;
  std::string mesh_file;
  std::string potential = "zero";
  GaugeMode gauge = GaugeMode::Original;
  std::string V = "none";
  BcSpec bc;
  int p = 3;
  double h = 0.05;
  int k = 6;
  double tol = 1e-8;
  int quad_degree = 0;  // 0: default exactness
  std::optional<double> shift;  // empty: automatic
  int samples = 201;    // grid points per side; 0 disables sampling
  int threads = 0;
  bool align_grid = true;
  std::filesystem::path output = "run";

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {"domain", "mesh_file", "potential", "gauge", "V",
                                               "bc", "p", "h", "k", "tol", "quad_degree", "shift",
                                               "samples", "threads", "align_grid", "output"};
    return k;
  }

  void set(const std::string& key, const std::string& raw) {
    const std::string value = detail::trim(raw);
    if (key == "domain") {
      const std::string v = detail::lower(value);
      if (v == "square") domain = DomainKind::Square;
      else if (v == "lshape") domain = DomainKind::LShape;
      else if (v == "file") domain = DomainKind::File;
      else throw ConfigError("domain '" + value + "' is not square, lshape or file");
    } else if (key == "mesh_file") {
      mesh_file = value;
    } else if (key == "potential") {
      try {
        builtin_potential(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      potential = value;
    } else if (key == "gauge") {
      const std::string v = detail::lower(value);
      if (v == "original") gauge = GaugeMode::Original;
      else if (v == "canonical") gauge = GaugeMode::Canonical;
      else throw ConfigError("gauge '" + value + "' is not original or canonical");
    } else if (key == "V") {
      parse_scalar_potential(value);
      V = value;
    } else if (key == "bc") {
      bc = BcSpec::parse(value);
    } else if (key == "p") {
      p = detail::parse_number<int>(key, value);
    } else if (key == "h") {
      h = detail::parse_number<double>(key, value);
    } else if (key == "k") {
      k = detail::parse_number<int>(key, value);
    } else if (key == "tol") {
      tol = detail::parse_number<double>(key, value);
    } else if (key == "quad_degree") {
      quad_degree = detail::parse_number<int>(key, value);
    } else if (key == "shift") {
      if (detail::lower(value) == "auto") shift.reset();
      else shift = detail::parse_number<double>(key, value);
    } else if (key == "samples") {
      samples = detail::parse_number<int>(key, value);
    } else if (key == "threads") {
      threads = detail::parse_number<int>(key, value);
    } else if (key == "align_grid") {
      align_grid = detail::parse_bool(key, value);
    } else if (key == "output") {
      output = value;
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  /// Applies "key=value".
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("'" + assignment + "' is not key=value");
    set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
  }

  void validate() const {
    if (p < 1 || p > kMaxDegree) throw ConfigError("p must lie in 1.." + std::to_string(kMaxDegree));
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("h must be positive");
    if (k < 1) throw ConfigError("k must be at least 1");
    if (!(tol > 0.0) || tol >= 1.0) throw ConfigError("tol must lie in (0, 1)");
    if (quad_degree < 0) throw ConfigError("quad_degree must be non-negative");
    if (samples == 1 || samples < 0) throw ConfigError("samples must be 0 or at least 2");
    if (threads < 0) throw ConfigError("threads must be non-negative");
    if (shift && !std::isfinite(*shift)) throw ConfigError("shift must be finite");
    if (domain == DomainKind::File && mesh_file.empty()) throw ConfigError("domain=file needs mesh_file");
    if (domain != DomainKind::File && !mesh_file.empty()) throw ConfigError("mesh_file is only valid with domain=file");
    if (domain == DomainKind::LShape && V != "none")
      throw ConfigError("grid potentials are defined on (-1,1)^2 and do not cover the L-shape");
    if (output.empty()) throw ConfigError("output must not be empty");
  }

  /// Parses config text; relative mesh_file paths resolve against base_dir.
  static RunConfig parse(std::istream& in, const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    std::set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
      const std::string key = detail::trim(line.substr(0, eq));
      if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      try {
        c.set(key, line.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (!c.mesh_file.empty() && !base_dir.empty() && std::filesystem::path(c.mesh_file).is_relative())
      c.mesh_file = (base_dir / c.mesh_file).lexically_normal().string();
    c.validate();
    return c;
  }

  static RunConfig parse_text(const std::string& text, const std::filesystem::path& base_dir = {}) {
    std::istringstream in(text);
    return parse(in, base_dir);
  }

  /// Normalized key/value pairs in keys() order.
  std::vector<std::pair<std::string, std::string>> entries() const {
    return {{"domain", magauge::to_string(domain)},
            {"mesh_file", mesh_file},
            {"potential", potential},
            {"gauge", magauge::to_string(gauge)},
            {"V", V},
            {"bc", bc.to_string()},
            {"p", std::to_string(p)},
            {"h", format_double(h)},
            {"k", std::to_string(k)},
            {"tol", format_double(tol)},
            {"quad_degree", std::to_string(quad_degree)},
            {"shift", shift ? format_double(*shift) : "auto"},
            {"samples", std::to_string(samples)},
            {"threads", std::to_string(threads)},
            {"align_grid", align_grid ? "true" : "false"},
            {"output", output.string()}};
  }

  std::string to_text() const {
    std::string s;
    for (const auto& [key, value] : entries()) s += key + "=" + value + "\n";
    return s;
  }
};

inline RunConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return RunConfig::parse_text(text, path.parent_path());
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct StageTimes {
  double mesh = 0.0;        // mesh generation or loading, FE space construction
  double gauge = 0.0;       // Neumann space, Poisson assembly, bordered solve, ||A||, ||F||
  double assemble = 0.0;    // K and M
  double factorize = 0.0;   // K - sigma M, including shift retries
  double eigensolve = 0.0;  // Krylov iteration
  double total = 0.0;       // wall clock of the whole run before output
};

struct RunOutcome {
  RunConfig config;
  std::string config_text;  // hashed into the manifest
  std::string mesh_file_sha1;
  std::string mesh_sha1;    // serialized mesh actually used
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const FeSpace> space;
  int cells_per_side = 0;   // generated domains only
  std::optional<GaugeField> gauge;
  std::optional<GaugeReport> gauge_report;
  HermitianPencil pencil;
  EigenResult eig;
  HeuristicTable norms;
  StageTimes times;
  std::vector<std::pair<int, int>> degenerate_clusters;  // 1-based inclusive ranges
  std::vector<std::string> warnings;

  bool converged() const { return eig.converged; }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

/// Runs body, converting any exception into a RunError attributed to stage.
template <class Body>
auto staged(const std::string& stage, Body&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const RunError&) {
    throw;
  } catch (const ConfigError& e) {
    throw RunError(stage, RunError::Kind::Config, e.what());
  } catch (const MeshError& e) {
    throw RunError(stage, RunError::Kind::Config, e.what());
  } catch (const std::invalid_argument& e) {
    throw RunError(stage, RunError::Kind::Config, e.what());
  } catch (const std::out_of_range& e) {
    throw RunError(stage, RunError::Kind::Config, e.what());
  } catch (const std::exception& e) {
    throw RunError(stage, RunError::Kind::Numerical, e.what());
  }
}

/// Triangles whose closure crosses a line of the 16x16 grid on (-1,1)^2.
inline std::size_t cells_crossing_grid(const Mesh& mesh) {
  constexpr int n = GridScalarPotential::kCells;
  constexpr double w = 2.0 / n, eps = 1e-10;
  std::size_t count = 0;
  for (const auto& t : mesh.triangles) {
    bool crosses = false;
    for (int axis = 0; axis < 2 && !crosses; ++axis) {
      double lo = 1e300, hi = -1e300;
      for (int v : t) {
        const double c = axis == 0 ? mesh.vertices[v].x : mesh.vertices[v].y;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
      lo = std::clamp(lo, -1.0, 1.0);
      hi = std::clamp(hi, -1.0, 1.0);
      const int first = static_cast<int>(std::floor((lo + 1.0) / w + eps));
      const int last = static_cast<int>(std::ceil((hi + 1.0) / w - eps));
      crosses = last - first > 1;
    }
    if (crosses) ++count;
  }
  return count;
}

/// Clusters of consecutive eigenvalues closer than rel*|lambda|.
inline std::vector<std::pair<int, int>> degenerate_clusters(const std::vector<double>& lambdas, double rel) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t j = 0; j + 1 < lambdas.size();) {
    std::size_t e = j;
    while (e + 1 < lambdas.size() && std::abs(lambdas[e + 1] - lambdas[e]) < rel * std::abs(lambdas[e + 1])) ++e;
    if (e > j) out.emplace_back(static_cast<int>(j) + 1, static_cast<int>(e) + 1);
    j = e + 1;
  }
  return out;
}

}  // namespace detail

inline constexpr double kDegenerateRel = 1e-6;

/// Computes a run in memory. Throws RunError; nothing is written.
inline RunOutcome execute_run(const RunConfig& cfg, std::string config_text = {}) {
  const auto start = detail::Clock::now();
  RunOutcome out;
  out.config = cfg;
  out.config_text = config_text.empty() ? cfg.to_text() : std::move(config_text);
  detail::staged("config", [&] { cfg.validate(); });
  const VectorPotential A = detail::staged("config", [&] { return builtin_potential(cfg.potential); });
  const ScalarPotential V = detail::staged("config", [&] { return parse_scalar_potential(cfg.V); });

  auto t = detail::Clock::now();
  detail::staged("mesh", [&] {
    Mesh mesh;
    switch (cfg.domain) {
      case DomainKind::Square: {
        SquareOptions opt;
        if (V.grid && cfg.align_grid) opt.cell_multiple = GridScalarPotential::kCells;
        mesh = generate_square(cfg.h, opt);
        out.cells_per_side = crossed_cell_count(2.0, cfg.h);
        if (opt.cell_multiple > 1)
          out.cells_per_side = (out.cells_per_side + opt.cell_multiple - 1) / opt.cell_multiple * opt.cell_multiple;
        break;
      }
      case DomainKind::LShape:
        mesh = generate_lshape(cfg.h);
        out.cells_per_side = 3 * crossed_cell_count(1.0, cfg.h);
        break;
      case DomainKind::File: {
        const std::string bytes = read_file(cfg.mesh_file);
        out.mesh_file_sha1 = git_blob_sha1(bytes);
        std::istringstream in(bytes);
        MeshReport report;
        mesh = load_mesh(in, &report);
        if (report.reoriented > 0)
          out.warnings.push_back("mesh: " + std::to_string(report.reoriented) + " triangles reoriented to counterclockwise");
        if (mesh.h_max > cfg.h * (1.0 + 1e-12))
          out.warnings.push_back("mesh: longest edge " + format_double(mesh.h_max) + " exceeds h=" + format_double(cfg.h));
        break;
      }
    }
    if (V.grid) {
      if (const std::size_t crossing = detail::cells_crossing_grid(mesh); crossing > 0)
        out.warnings.push_back("V: " + std::to_string(crossing) +
                               " triangles straddle lines of the 16x16 potential grid; quadrature crosses discontinuities");
    }
    std::ostringstream serialized;
    write_mesh(serialized, mesh);
    out.mesh_sha1 = git_blob_sha1(serialized.str());
    out.mesh = std::make_shared<const Mesh>(std::move(mesh));
    out.space = std::make_shared<const FeSpace>(out.mesh, cfg.p, cfg.bc.resolve(*out.mesh));
  });
  out.times.mesh = detail::seconds_since(t);

  AssemblyOptions aopt;
  aopt.quad_degree = cfg.quad_degree;
  aopt.polynomial = A.polynomial;
  aopt.threads = cfg.threads;

  CellVectorField G = as_cell_field(A);
  double field_norm = 0.0;
  if (cfg.gauge == GaugeMode::Canonical) {
    t = detail::Clock::now();
    detail::staged("gauge", [&] {
      auto neumann = std::make_shared<const FeSpace>(out.mesh, cfg.p, uniform_bc(*out.mesh, BoundaryCondition::Neumann));
      out.gauge = compute_canonical_gauge(std::move(neumann), A, aopt);
    });
    out.times.gauge = detail::seconds_since(t);
    G = out.gauge->field();
    field_norm = out.gauge->norm_F;
  }

  const CellScalarField Vf = as_cell_field(V);
  t = detail::Clock::now();
  out.pencil = detail::staged("assemble", [&] { return assemble_magnetic_forms(*out.space, G, Vf, aopt); });
  out.times.assemble = detail::seconds_since(t);

  EigOptions eopt;
  eopt.tol = cfg.tol;
  if (cfg.shift) eopt.shift = ShiftPolicy::fixed(*cfg.shift);
  out.eig = detail::staged("eigensolve", [&] { return lowest_eigenpairs(out.pencil, cfg.k, eopt); });
  out.times.factorize = out.eig.factor_seconds;
  out.times.eigensolve = out.eig.krylov_seconds;
  if (!out.eig.converged)
    out.warnings.push_back("eigensolve: not converged after " + std::to_string(out.eig.restarts) + " restarts");

  detail::staged("diagnostics", [&] {
    if (out.gauge) out.gauge_report = gauge_diagnostics(*out.gauge);
    if (cfg.gauge == GaugeMode::Original)
      field_norm = field_l2_norm(A, *out.mesh, quad_rule(out.pencil.quad_degree));
    out.norms = heuristic_table(*out.space, out.eig, G, Vf, field_norm, out.pencil.quad_degree);
  });
  out.degenerate_clusters = detail::degenerate_clusters(out.eig.eigenvalues, kDegenerateRel);
  out.times.total = detail::seconds_since(start);
  return out;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  f.close();
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
}

inline std::string csv_or_empty(double v) { return std::isnan(v) ? std::string() : format_double(v); }

inline std::string ranges_to_string(const std::vector<std::pair<int, int>>& r) {
  if (r.empty()) return "none";
  std::string s;
  for (const auto& [a, b] : r) s += (s.empty() ? "" : ";") + std::to_string(a) + "-" + std::to_string(b);
  return s;
}

inline void write_run_files(const RunOutcome& run, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ostringstream ev;
  ev << "j,lambda,residual\n";
  for (std::size_t j = 0; j < run.eig.size(); ++j)
    ev << j + 1 << ',' << format_double(run.eig.eigenvalues[j]) << ',' << format_double(run.eig.relative_residuals[j]) << '\n';
  write_text(dir / "eigenvalues.csv", ev.str());

  std::ostringstream nm;
  nm << "j,lambda,norm_u,norm_grad,norm_Gu,rayleigh,rayleigh_error,field_norm\n";
  for (const auto& r : run.norms.rows)
    nm << r.j << ',' << format_double(r.lambda) << ',' << format_double(r.norm_u) << ',' << format_double(r.norm_grad) << ','
       << format_double(r.norm_Gu) << ',' << format_double(r.rayleigh) << ',' << format_double(r.rayleigh_error) << ','
       << format_double(run.norms.field_norm) << '\n';
  write_text(dir / "norms.csv", nm.str());

  if (run.gauge_report) {
    const GaugeReport& g = *run.gauge_report;
    std::ostringstream gs;
    gs << "quantity,value\n";
    const std::pair<const char*, double> rows[] = {
        {"norm_A", g.norm_A},
        {"norm_F", g.norm_F},
        {"norm_grad_a", g.norm_grad_a},
        {"galerkin_residual", g.galerkin_residual},
        {"galerkin_scaled", g.galerkin_scaled},
        {"divergence_residual", g.divergence_residual},
        {"boundary_flux", g.boundary_flux},
        {"orthogonality", g.orthogonality},
        {"mean_a", g.mean_a},
        {"field_scale", g.field_scale},
        {"multiplier", run.gauge->multiplier},
        {"min_pivot", run.gauge->min_pivot},
        {"pivot_threshold", run.gauge->pivot_threshold},
        {"quad_degree", static_cast<double>(run.gauge->quad_degree)},
    };
    for (const auto& [name, value] : rows) gs << name << ',' << format_double(value) << '\n';
    write_text(dir / "gauge.csv", gs.str());
  }

  if (run.config.samples > 0) {
    fs::create_directory(dir / "samples");
    for (std::size_t j = 0; j < run.eig.size(); ++j) {
      const GridSamples s = sample_eigenvector(*run.space, run.eig.eigenvectors[j], run.config.samples);
      std::ostringstream cs;
      cs << "x,y,inside,modulus,real,imag,phase\n";
      for (std::size_t i = 0; i < s.points.size(); ++i)
        cs << format_double(s.points[i].x) << ',' << format_double(s.points[i].y) << ',' << int(s.inside[i]) << ','
           << csv_or_empty(s.modulus[i]) << ',' << csv_or_empty(s.real[i]) << ',' << csv_or_empty(s.imag[i]) << ','
           << csv_or_empty(s.phase[i]) << '\n';
      write_text(dir / "samples" / ("eig_" + std::to_string(j + 1) + ".csv"), cs.str());
    }
  }

  std::ostringstream ts;
  ts << "stage,seconds\n";
  const std::pair<const char*, double> stages[] = {{"mesh", run.times.mesh},         {"gauge", run.times.gauge},
                                                   {"assemble", run.times.assemble}, {"factorize", run.times.factorize},
                                                   {"eigensolve", run.times.eigensolve}, {"total", run.times.total}};
  for (const auto& [name, value] : stages) ts << name << ',' << format_double(value) << '\n';
  write_text(dir / "timing.csv", ts.str());

  std::ostringstream mf;
  mf << "format=" << kRunFormat << '\n'
     << "library_version=" << kLibraryVersion << '\n'
     << "catalog_version=" << kCatalogVersion << '\n';
  for (const auto& [key, value] : run.config.entries()) mf << "config." << key << '=' << value << '\n';
  mf << "config.sha1=" << git_blob_sha1(run.config_text) << '\n';
  if (!run.mesh_file_sha1.empty()) mf << "mesh_file.sha1=" << run.mesh_file_sha1 << '\n';
  mf << "mesh.sha1=" << run.mesh_sha1 << '\n'
     << "mesh.vertices=" << run.mesh->num_vertices() << '\n'
     << "mesh.triangles=" << run.mesh->num_triangles() << '\n'
     << "mesh.h_max=" << format_double(run.mesh->h_max) << '\n'
     << "mesh.cells_per_side=" << run.cells_per_side << '\n'
     << "dofs=" << run.space->num_dofs() << '\n'
     << "free_dofs=" << run.space->num_free() << '\n'
     << "quad_degree=" << run.pencil.quad_degree << '\n'
     << "eig.converged=" << (run.eig.converged ? "true" : "false") << '\n'
     << "eig.solves=" << run.eig.solves << '\n'
     << "eig.restarts=" << run.eig.restarts << '\n'
     << "eig.shift=" << format_double(run.eig.shift) << '\n'
     << "eig.shift_retries=" << run.eig.shift_retries << '\n'
     << "degenerate_clusters=" << ranges_to_string(run.degenerate_clusters) << '\n'
     << "warnings=" << run.warnings.size() << '\n';
  for (std::size_t i = 0; i < run.warnings.size(); ++i) mf << "warning." << i + 1 << '=' << run.warnings[i] << '\n';
  mf << "status=" << (run.eig.converged ? "ok" : "not-converged") << '\n';
  write_text(dir / "manifest", mf.str());
}

}  // namespace detail

/// Writes a run directory all-or-nothing: files go to a sibling temporary
/// directory that replaces `dir` by rename once complete.
inline void write_run(const RunOutcome& run, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path parent = target.parent_path();
  std::random_device rd;
  const std::string tag = std::to_string(rd()) + std::to_string(rd());
  const fs::path tmp = parent / ("." + target.filename().string() + ".tmp-" + tag);
  const fs::path old = parent / ("." + target.filename().string() + ".old-" + tag);
  try {
    fs::create_directories(parent);
    fs::create_directory(tmp);
    detail::write_run_files(run, tmp);
    const bool replace = fs::exists(target);
    if (replace) fs::rename(target, old);
    fs::rename(tmp, target);
    if (replace) fs::remove_all(old);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    if (fs::exists(old, ec) && !fs::exists(target, ec)) fs::rename(old, target, ec);
    throw RunError("output", RunError::Kind::Config, e.what());
  }
}

/// execute_run followed by write_run to config.output.
inline RunOutcome run_experiment(const RunConfig& cfg, std::string config_text = {}) {
  RunOutcome run = execute_run(cfg, std::move(config_text));
  write_run(run, cfg.output);
  return run;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct RunSummary {
  std::filesystem::path dir;
  std::map<std::string, std::string> manifest;
  std::vector<double> lambdas;

  const std::string& get(const std::string& key) const {
    const auto it = manifest.find(key);
    if (it == manifest.end()) throw ConfigError(dir.string() + ": manifest lacks '" + key + "'");
    return it->second;
  }
  std::string gauge() const { return get("config.gauge"); }
  double h() const { return detail::parse_number<double>("h", get("config.h")); }
};

inline RunSummary load_run(const std::filesystem::path& dir) {
  RunSummary r;
  r.dir = dir;
  {
    std::istringstream in(read_file(dir / "manifest"));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) r.manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  std::istringstream in(read_file(dir / "eigenvalues.csv"));
  std::string line;
  std::getline(in, line);
  if (detail::trim(line) != "j,lambda,residual") throw ConfigError(dir.string() + ": eigenvalues.csv has an unexpected header");
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split(line, ',');
    if (cols.size() != 3) throw ConfigError(dir.string() + ": malformed eigenvalues.csv row");
    r.lambdas.push_back(detail::parse_number<double>("lambda", cols[1]));
  }
  return r;
}

struct ComparisonRow {
  std::string metric;  // difference | max | stability
  std::size_t a = 0, b = 0;
  int j = 0;           // 0 for summary rows
  double lambda_a = std::numeric_limits<double>::quiet_NaN();
  double lambda_b = std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
};

struct Comparison {
  std::vector<RunSummary> runs;
  std::vector<ComparisonRow> rows;

  /// Largest s(h, h') over run pairs in the given gauge; empty if none.
  std::optional<double> stability(const std::string& gauge) const {
    std::optional<double> s;
    for (const auto& r : rows)
      if (r.metric == "stability" && runs[r.a].gauge() == gauge) s = std::max(s.value_or(0.0), r.value);
    return s;
  }
};

inline constexpr const char* kSharedRunKeys[] = {"config.domain", "config.mesh_file", "config.potential", "config.V",
                                                 "config.bc",     "config.p",         "config.k"};

/// Pairwise eigenvalue differences. Pairs in the same gauge at different h
/// carry the stability metric s(h,h') = max_j |lambda_j(h) - lambda_j(h')|.
inline Comparison compare_runs(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  Comparison c;
  for (const auto& d : dirs) c.runs.push_back(load_run(d));
  for (std::size_t i = 1; i < c.runs.size(); ++i)
    for (const char* key : kSharedRunKeys)
      if (c.runs[i].get(key) != c.runs[0].get(key))
        throw ConfigError(std::string("runs differ in ") + (key + 7) + ": '" + c.runs[0].get(key) + "' vs '" +
                          c.runs[i].get(key) + "'");
  for (std::size_t a = 0; a < c.runs.size(); ++a)
    for (std::size_t b = a + 1; b < c.runs.size(); ++b) {
      const auto& la = c.runs[a].lambdas;
      const auto& lb = c.runs[b].lambdas;
      const std::size_t n = std::min(la.size(), lb.size());
      double worst = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = std::abs(la[j] - lb[j]);
        worst = std::max(worst, d);
        c.rows.push_back({"difference", a, b, static_cast<int>(j) + 1, la[j], lb[j], d});
      }
      const bool stability = c.runs[a].gauge() == c.runs[b].gauge() && c.runs[a].h() != c.runs[b].h();
      c.rows.push_back({stability ? "stability" : "max", a, b, 0, std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN(), worst});
    }
  return c;
}

inline void write_comparison(std::ostream& out, const Comparison& c) {
  out << "metric,run_a,run_b,gauge_a,gauge_b,h_a,h_b,j,lambda_a,lambda_b,value\n";
  for (const auto& r : c.rows) {
    const auto& a = c.runs[r.a];
    const auto& b = c.runs[r.b];
    out << r.metric << ',' << a.dir.string() << ',' << b.dir.string() << ',' << a.gauge() << ',' << b.gauge() << ','
        << a.get("config.h") << ',' << b.get("config.h") << ',' << (r.j > 0 ? std::to_string(r.j) : std::string()) << ','
        << detail::csv_or_empty(r.lambda_a) << ',' << detail::csv_or_empty(r.lambda_b) << ',' << format_double(r.value)
        << '\n';
  }
}

}  // namespace magauge
