#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geometry.hpp"

namespace magauge {

/// Marker convention: 1 = outer boundary, 2 + k = k-th hole.
inline constexpr int kOuterMarker = 1;

struct BoundaryEdge {
  std::array<int, 2> v{};
  int marker = kOuterMarker;
  friend bool operator==(const BoundaryEdge&, const BoundaryEdge&) = default;
};

/// Conforming triangulation with boundary markers. Triangles are stored
/// counterclockwise; h_max is the longest edge length.
struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryEdge> boundary_edges;
  double h_max = 0.0;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_triangles() const { return triangles.size(); }

  AffineMap cell_map(std::size_t t) const {
    const auto& tri = triangles[t];
    return AffineMap(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
  }

  double area() const {
    double total = 0.0;
    for (const auto& t : triangles)
      total += 0.5 * signed_area2(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    return total;
  }

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

class MeshError : public std::runtime_error {
 public:
  explicit MeshError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

inline double longest_edge(const std::vector<Vec2>& vertices,
                           const std::vector<std::array<int, 3>>& triangles) {
  double h = 0.0;
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k)
      h = std::max(h, norm(vertices[t[(k + 1) % 3]] - vertices[t[k]]));
  return h;
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

/// Edge numbering derived from the triangle list. Local edge k of a triangle
/// joins local vertices k and (k+1)%3.
struct MeshTopology {
  std::vector<std::array<int, 2>> edges;              // sorted vertex pair (a < b)
  std::vector<std::array<int, 3>> cell_edges;         // per triangle
  std::vector<std::array<int, 2>> edge_cells;         // -1 when absent
  std::vector<int> edge_marker;                       // 0 for interior edges

  std::size_t num_edges() const { return edges.size(); }
};

inline MeshTopology build_topology(const Mesh& mesh) {
  MeshTopology topo;
  const std::size_t nt = mesh.triangles.size();
  std::vector<std::pair<std::uint64_t, std::int64_t>> keyed;
  keyed.reserve(3 * nt);
  for (std::size_t t = 0; t < nt; ++t)
    for (int k = 0; k < 3; ++k) {
      const auto& tri = mesh.triangles[t];
      keyed.emplace_back(edge_key(tri[k], tri[(k + 1) % 3]), static_cast<std::int64_t>(3 * t + k));
    }
  std::sort(keyed.begin(), keyed.end());

  topo.cell_edges.assign(nt, {-1, -1, -1});
  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i;
    const int e = static_cast<int>(topo.edges.size());
    const auto key = keyed[i].first;
    topo.edges.push_back({static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffu)});
    std::array<int, 2> cells{-1, -1};
    int n_inc = 0;
    for (; j < keyed.size() && keyed[j].first == key; ++j) {
      const auto t = static_cast<std::size_t>(keyed[j].second / 3);
      const int k = static_cast<int>(keyed[j].second % 3);
      topo.cell_edges[t][k] = e;
      if (n_inc < 2) cells[n_inc] = static_cast<int>(t);
      ++n_inc;
    }
    if (n_inc > 2) throw MeshError("non-manifold edge (" + std::to_string(topo.edges.back()[0]) +
                                   "," + std::to_string(topo.edges.back()[1]) + ")");
    topo.edge_cells.push_back(cells);
    i = j;
  }

  topo.edge_marker.assign(topo.edges.size(), 0);
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(topo.edges.size());
  for (std::size_t e = 0; e < topo.edges.size(); ++e)
    index.emplace(edge_key(topo.edges[e][0], topo.edges[e][1]), static_cast<int>(e));
  for (const auto& be : mesh.boundary_edges) {
    auto it = index.find(edge_key(be.v[0], be.v[1]));
    if (it != index.end()) topo.edge_marker[it->second] = be.marker;
  }
  return topo;
}

/// Derives boundary edges (incident to exactly one triangle) with a uniform
/// marker, oriented along the counterclockwise traversal of their triangle.
inline std::vector<BoundaryEdge> derive_boundary_edges(const std::vector<std::array<int, 3>>& triangles,
                                                       int marker = kOuterMarker) {
  std::vector<std::pair<std::uint64_t, std::array<int, 2>>> half;
  half.reserve(3 * triangles.size());
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k) half.push_back({edge_key(t[k], t[(k + 1) % 3]), {t[k], t[(k + 1) % 3]}});
  std::sort(half.begin(), half.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<BoundaryEdge> out;
  for (std::size_t i = 0; i < half.size();) {
    std::size_t j = i;
    while (j < half.size() && half[j].first == half[i].first) ++j;
    if (j - i == 1) out.push_back({half[i].second, marker});
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct MeshReport {
  bool ok = true;
  std::string message;         // first violation, empty when ok
  std::size_t reoriented = 0;  // triangles flipped to counterclockwise on load

  explicit operator bool() const { return ok; }
};

namespace detail {

inline MeshReport fail(std::string msg) {
  MeshReport r;
  r.ok = false;
  r.message = std::move(msg);
  return r;
}

inline std::string edge_str(int a, int b) {
  return "(" + std::to_string(a) + "," + std::to_string(b) + ")";
}

/// Finds a vertex lying strictly inside one of the given segments.
inline std::pair<int, int> find_hanging_vertex(const Mesh& mesh,
                                               const std::vector<std::array<int, 2>>& segments) {
  if (segments.empty() || mesh.vertices.empty()) return {-1, -1};
  double xmin = mesh.vertices[0].x, xmax = xmin, ymin = mesh.vertices[0].y, ymax = ymin;
  for (const auto& v : mesh.vertices) {
    xmin = std::min(xmin, v.x); xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y); ymax = std::max(ymax, v.y);
  }
  const double h = std::max(longest_edge(mesh.vertices, mesh.triangles), 1e-300);
  const int nx = std::max(1, static_cast<int>(std::ceil((xmax - xmin) / h)));
  const int ny = std::max(1, static_cast<int>(std::ceil((ymax - ymin) / h)));
  auto bucket = [&](double x, double y) {
    int i = std::clamp(static_cast<int>((x - xmin) / h), 0, nx - 1);
    int j = std::clamp(static_cast<int>((y - ymin) / h), 0, ny - 1);
    return std::pair{i, j};
  };
  std::vector<std::vector<int>> grid(static_cast<std::size_t>(nx) * ny);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    auto [i, j] = bucket(mesh.vertices[v].x, mesh.vertices[v].y);
    grid[static_cast<std::size_t>(j) * nx + i].push_back(static_cast<int>(v));
  }
  const double scale = std::max({xmax - xmin, ymax - ymin, 1e-300});
  for (const auto& s : segments) {
    const Vec2 a = mesh.vertices[s[0]], b = mesh.vertices[s[1]];
    const Vec2 ab = b - a;
    const double len2 = norm2(ab);
    auto [i0, j0] = bucket(std::min(a.x, b.x), std::min(a.y, b.y));
    auto [i1, j1] = bucket(std::max(a.x, b.x), std::max(a.y, b.y));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        for (int v : grid[static_cast<std::size_t>(j) * nx + i]) {
          if (v == s[0] || v == s[1]) continue;
          const Vec2 av = mesh.vertices[v] - a;
          const double t = dot(av, ab) / len2;
          if (t <= 1e-12 || t >= 1.0 - 1e-12) continue;
          if (std::abs(cross(ab, av)) <= 1e-12 * scale * std::sqrt(len2)) return {v, static_cast<int>(&s - segments.data())};
        }
  }
  return {-1, -1};
}

}  // namespace detail

/// Checks every Mesh invariant; reports the first violation found.
inline MeshReport validate_mesh(const Mesh& mesh) {
  const int nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int v : tri)
      if (v < 0 || v >= nv) return detail::fail("triangle " + std::to_string(t) + " has out-of-range vertex");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      return detail::fail("triangle " + std::to_string(t) + " repeats a vertex");
    if (signed_area2(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]) <= 0.0)
      return detail::fail("triangle " + std::to_string(t) + " has non-positive signed area");
  }

  MeshTopology topo;
  try {
    topo = build_topology(mesh);
  } catch (const MeshError& e) {
    return detail::fail(e.what());
  }

  std::vector<std::array<int, 2>> single;
  for (std::size_t e = 0; e < topo.num_edges(); ++e)
    if (topo.edge_cells[e][1] < 0) single.push_back(topo.edges[e]);

  if (auto [v, s] = detail::find_hanging_vertex(mesh, single); v >= 0)
    return detail::fail("non-conforming: vertex " + std::to_string(v) + " hangs on edge " +
                        detail::edge_str(single[s][0], single[s][1]));

  std::unordered_map<std::uint64_t, int> listed;
  for (const auto& be : mesh.boundary_edges) {
    if (be.v[0] < 0 || be.v[0] >= nv || be.v[1] < 0 || be.v[1] >= nv)
      return detail::fail("boundary edge has out-of-range vertex");
    if (!listed.emplace(edge_key(be.v[0], be.v[1]), be.marker).second)
      return detail::fail("boundary edge " + detail::edge_str(be.v[0], be.v[1]) + " carries more than one marker");
  }
  for (const auto& s : single)
    if (!listed.contains(edge_key(s[0], s[1])))
      return detail::fail("edge " + detail::edge_str(s[0], s[1]) + " is on the boundary but has no marker");
  if (listed.size() != single.size())
    return detail::fail("a marked boundary edge is not incident to exactly one triangle");

  const double h = longest_edge(mesh.vertices, mesh.triangles);
  if (std::abs(h - mesh.h_max) > 1e-12 * std::max(1.0, h))
    return detail::fail("h_max does not match the longest edge");
  return {};
}

/// Euler characteristic V - E + T; equals 1 - (number of holes) for a valid mesh.
inline long euler_characteristic(const Mesh& mesh) {
  const auto topo = build_topology(mesh);
  return static_cast<long>(mesh.vertices.size()) - static_cast<long>(topo.num_edges()) +
         static_cast<long>(mesh.triangles.size());
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

namespace detail {

/// Crossed triangulation of the union of the selected cells of an nx-by-ny grid:
/// every cell is split into four triangles about its center.
template <class Keep>
Mesh crossed_grid(Vec2 lower, double cell, int nx, int ny, Keep keep) {
  Mesh m;
  std::vector<int> corner(static_cast<std::size_t>(nx + 1) * (ny + 1), -1);
  auto cid = [&](int i, int j) { return static_cast<std::size_t>(j) * (nx + 1) + i; };
  auto vertex = [&](int i, int j) {
    int& id = corner[cid(i, j)];
    if (id < 0) {
      id = static_cast<int>(m.vertices.size());
      m.vertices.push_back({lower.x + cell * i, lower.y + cell * j});
    }
    return id;
  };
  // Corner vertices first in row-major order, then cell centers.
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      bool used = false;
      for (int dj = -1; dj <= 0; ++dj)
        for (int di = -1; di <= 0; ++di) {
          const int ci = i + di, cj = j + dj;
          if (ci >= 0 && cj >= 0 && ci < nx && cj < ny && keep(ci, cj)) used = true;
        }
      if (used) vertex(i, j);
    }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!keep(i, j)) continue;
      const int c = static_cast<int>(m.vertices.size());
      m.vertices.push_back({lower.x + cell * (i + 0.5), lower.y + cell * (j + 0.5)});
      const int v00 = corner[cid(i, j)], v10 = corner[cid(i + 1, j)];
      const int v11 = corner[cid(i + 1, j + 1)], v01 = corner[cid(i, j + 1)];
      m.triangles.push_back({v00, v10, c});
      m.triangles.push_back({v10, v11, c});
      m.triangles.push_back({v11, v01, c});
      m.triangles.push_back({v01, v00, c});
    }
  m.boundary_edges = derive_boundary_edges(m.triangles, kOuterMarker);
  m.h_max = longest_edge(m.vertices, m.triangles);
  return m;
}

}  // namespace detail

/// Number of crossed cells across a length so no cell side exceeds h.
inline int crossed_cell_count(double length, double h) {
  const double n = length / h;
  return std::max(1, static_cast<int>(std::ceil(n - 1e-12)));
}

struct SquareOptions {
  Vec2 lower{-1.0, -1.0};
  Vec2 upper{1.0, 1.0};
  int cell_multiple = 1;  // round the per-side cell count up to a multiple of this
};

/// Structured crossed triangulation of an axis-aligned square (default (-1,1)^2).
inline Mesh generate_square(double h, const SquareOptions& opt = {}) {
  const double side = opt.upper.x - opt.lower.x;
  if (!(h > 0.0)) throw MeshError("mesh size h must be positive");
  if (h >= side) throw MeshError("mesh size h=" + std::to_string(h) + " degenerates to a single cell");
  if (std::abs((opt.upper.y - opt.lower.y) - side) > 1e-14 * side) throw MeshError("square bounds are not square");
  int n = crossed_cell_count(side, h);
  if (opt.cell_multiple > 1) n = ((n + opt.cell_multiple - 1) / opt.cell_multiple) * opt.cell_multiple;
  return detail::crossed_grid(opt.lower, side / n, n, n, [](int, int) { return true; });
}

/// Crossed triangulation of (0,3)x(0,3) minus [2,3)x[2,3).
inline Mesh generate_lshape(double h) {
  if (!(h > 0.0)) throw MeshError("mesh size h must be positive");
  if (h > 1.0) throw MeshError("mesh size h=" + std::to_string(h) + " cannot resolve the reentrant corner");
  const int m = crossed_cell_count(1.0, h);
  const int n = 3 * m;
  return detail::crossed_grid({0.0, 0.0}, 1.0 / m, n, n,
                              [m](int i, int j) { return !(i >= 2 * m && j >= 2 * m); });
}

/// Splits every triangle into four through its edge midpoints. The result is
/// nested in the input (every coarse FE space is a subspace of the fine one).
inline Mesh refine_uniform(const Mesh& mesh) {
  const auto topo = build_topology(mesh);
  Mesh fine;
  fine.vertices = mesh.vertices;
  std::vector<int> mid(topo.num_edges());
  for (std::size_t e = 0; e < topo.num_edges(); ++e) {
    mid[e] = static_cast<int>(fine.vertices.size());
    const auto [a, b] = topo.edges[e];
    fine.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& v = mesh.triangles[t];
    const auto& ce = topo.cell_edges[t];
    const int m01 = mid[ce[0]], m12 = mid[ce[1]], m20 = mid[ce[2]];
    fine.triangles.push_back({v[0], m01, m20});
    fine.triangles.push_back({m01, v[1], m12});
    fine.triangles.push_back({m20, m12, v[2]});
    fine.triangles.push_back({m01, m12, m20});
  }
  std::unordered_map<std::uint64_t, int> edge_index;
  for (std::size_t e = 0; e < topo.num_edges(); ++e)
    edge_index.emplace(edge_key(topo.edges[e][0], topo.edges[e][1]), static_cast<int>(e));
  for (const auto& be : mesh.boundary_edges) {
    const int m = mid[edge_index.at(edge_key(be.v[0], be.v[1]))];
    fine.boundary_edges.push_back({{be.v[0], m}, be.marker});
    fine.boundary_edges.push_back({{m, be.v[1]}, be.marker});
  }
  fine.h_max = longest_edge(fine.vertices, fine.triangles);
  return fine;
}

// ---------------------------------------------------------------------------
// ASCII I/O
// ---------------------------------------------------------------------------
//
// Format: `nv nt nb`, then nv lines `x y`, nt lines `i j k` (0-based) and nb
// lines `i j marker`. Text after '#' is ignored.

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-empty, comment-stripped line as a token stream.
  bool next(std::istringstream& tokens) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      tokens = std::istringstream(line);
      tokens.imbue(std::locale::classic());
      return true;
    }
    return false;
  }
  int line() const { return line_no_; }

 private:
  std::istream& in_;
  int line_no_ = 0;
};

template <class... T>
void read_fields(LineReader& reader, const char* what, T&... out) {
  std::istringstream tokens;
  if (!reader.next(tokens)) throw MeshError(std::string("unexpected end of file while reading ") + what, reader.line() + 1);
  if (!((tokens >> out) && ...)) throw MeshError(std::string("malformed ") + what, reader.line());
  std::string rest;
  if (tokens >> rest) throw MeshError(std::string("trailing data in ") + what, reader.line());
}

}  // namespace detail

/// Parses the ASCII mesh format. Clockwise triangles are reoriented and
/// counted in report->reoriented.
inline Mesh load_mesh(std::istream& in, MeshReport* report = nullptr) {
  detail::LineReader reader(in);
  long long nv = 0, nt = 0, nb = 0;
  detail::read_fields(reader, "header", nv, nt, nb);
  if (nv < 3 || nt < 1 || nb < 3) throw MeshError("header counts must be nv>=3 nt>=1 nb>=3", reader.line());

  Mesh m;
  m.vertices.resize(static_cast<std::size_t>(nv));
  for (auto& v : m.vertices) {
    detail::read_fields(reader, "vertex", v.x, v.y);
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw MeshError("non-finite vertex coordinate", reader.line());
  }

  std::size_t flipped = 0;
  m.triangles.resize(static_cast<std::size_t>(nt));
  for (auto& t : m.triangles) {
    long long a = 0, b = 0, c = 0;
    detail::read_fields(reader, "triangle", a, b, c);
    for (long long i : {a, b, c})
      if (i < 0 || i >= nv) throw MeshError("triangle vertex index " + std::to_string(i) + " out of range", reader.line());
    t = {static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)};
    const double s = signed_area2(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
    if (s == 0.0 || t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw MeshError("degenerate triangle", reader.line());
    if (s < 0.0) {
      std::swap(t[1], t[2]);
      ++flipped;
    }
  }

  std::unordered_map<std::uint64_t, int> seen;
  m.boundary_edges.resize(static_cast<std::size_t>(nb));
  for (auto& be : m.boundary_edges) {
    long long a = 0, b = 0, marker = 0;
    detail::read_fields(reader, "boundary edge", a, b, marker);
    if (a < 0 || a >= nv || b < 0 || b >= nv)
      throw MeshError("boundary edge vertex index out of range", reader.line());
    if (marker < 1) throw MeshError("boundary marker must be >= 1", reader.line());
    be = {{static_cast<int>(a), static_cast<int>(b)}, static_cast<int>(marker)};
    if (!seen.emplace(edge_key(be.v[0], be.v[1]), reader.line()).second)
      throw MeshError("boundary edge listed twice", reader.line());
  }
  std::istringstream extra;
  if (reader.next(extra)) throw MeshError("unexpected data after boundary edges", reader.line());

  m.h_max = longest_edge(m.vertices, m.triangles);
  MeshReport check = validate_mesh(m);
  if (!check.ok) throw MeshError("invalid mesh: " + check.message);
  if (report) {
    *report = check;
    report->reoriented = flipped;
  }
  return m;
}

inline void write_mesh(std::ostream& out, const Mesh& m) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s.precision(17);
  s << m.vertices.size() << ' ' << m.triangles.size() << ' ' << m.boundary_edges.size() << '\n';
  for (const auto& v : m.vertices) s << v.x << ' ' << v.y << '\n';
  for (const auto& t : m.triangles) s << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const auto& b : m.boundary_edges) s << b.v[0] << ' ' << b.v[1] << ' ' << b.marker << '\n';
  out << s.str();
}

// ---------------------------------------------------------------------------
// Domains
// ---------------------------------------------------------------------------

enum class DomainKind { Square, LShape, File };

struct DomainSpec {
  DomainKind kind = DomainKind::Square;
  Vec2 lower{-1.0, -1.0};
  Vec2 upper{1.0, 1.0};
  std::string mesh_file;            // DomainKind::File
  std::vector<std::string> holes;   // descriptive only
  int cell_multiple = 1;

  static DomainSpec square() { return {}; }
  static DomainSpec lshape() { return {DomainKind::LShape, {0.0, 0.0}, {3.0, 3.0}, {}, {}, 1}; }

  double analytic_area() const {
    switch (kind) {
      case DomainKind::Square: return (upper.x - lower.x) * (upper.y - lower.y);
      case DomainKind::LShape: return 8.0;
      case DomainKind::File: break;
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
};

}  // namespace magauge
