#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lagrange.hpp"
#include "mesh.hpp"

namespace magauge {

enum class BoundaryCondition { Dirichlet, Neumann };

/// Marker -> boundary condition.
using BcAssignment = std::map<int, BoundaryCondition>;

inline BcAssignment uniform_bc(const Mesh& mesh, BoundaryCondition bc) {
  BcAssignment out;
  for (const auto& be : mesh.boundary_edges) out[be.marker] = bc;
  return out;
}

/// Globally continuous piecewise polynomials of degree p on a mesh.
///
/// Global numbering: vertex DOFs first, then p-1 DOFs per edge ordered from
/// the lower to the higher vertex index, then interior DOFs cell by cell.
/// DOFs on Dirichlet-marked edges (including their end points) are essential;
/// all others are free and numbered consecutively in free_index.
class FeSpace {
 public:
  FeSpace(std::shared_ptr<const Mesh> mesh, int p, BcAssignment bc)
      : mesh_(std::move(mesh)), element_(p), bc_(std::move(bc)) {
    if (!mesh_) throw std::invalid_argument("FeSpace needs a mesh");
    for (const auto& be : mesh_->boundary_edges)
      if (!bc_.contains(be.marker))
        throw std::invalid_argument("boundary marker " + std::to_string(be.marker) + " has no boundary condition");
    topo_ = build_topology(*mesh_);
    number_dofs();
    classify();
  }

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const MeshTopology& topology() const { return topo_; }
  const LagrangeElement& element() const { return element_; }
  const BcAssignment& bc() const { return bc_; }
  int degree() const { return element_.degree(); }

  std::size_t num_dofs() const { return dof_coords_.size(); }
  std::size_t num_free() const { return free_dofs_.size(); }
  std::size_t num_cells() const { return mesh_->triangles.size(); }
  int dofs_per_cell() const { return element_.num_dofs(); }

  /// Global DOF indices of a cell in local element order.
  const int* cell_dofs(std::size_t cell) const { return &cell_dofs_[cell * dofs_per_cell()]; }
  const Vec2& dof_coord(std::size_t dof) const { return dof_coords_[dof]; }
  bool is_essential(std::size_t dof) const { return free_index_[dof] < 0; }
  /// Position among the free DOFs, or -1 for essential ones.
  int free_index(std::size_t dof) const { return free_index_[dof]; }
  const std::vector<int>& free_dofs() const { return free_dofs_; }
  std::vector<int> essential_dofs() const {
    std::vector<int> out;
    for (std::size_t d = 0; d < num_dofs(); ++d)
      if (is_essential(d)) out.push_back(static_cast<int>(d));
    return out;
  }
  /// True when every DOF is free (pure Neumann).
  bool all_free() const { return num_free() == num_dofs(); }

 private:
  void number_dofs() {
    const Mesh& m = *mesh_;
    const int p = degree();
    const int nloc = dofs_per_cell();
    const std::size_t nv = m.vertices.size(), ne = topo_.num_edges(), nt = m.triangles.size();
    const int per_edge = element_.dofs_per_edge();
    const int per_cell = element_.interior_dofs();
    const std::size_t edge_base = nv, cell_base = nv + ne * per_edge;
    const std::size_t total = cell_base + nt * per_cell;

    cell_dofs_.assign(nt * nloc, -1);
    dof_coords_.resize(total);
    for (std::size_t v = 0; v < nv; ++v) dof_coords_[v] = m.vertices[v];

    for (std::size_t t = 0; t < nt; ++t) {
      const auto& tri = m.triangles[t];
      int* dofs = &cell_dofs_[t * nloc];
      const AffineMap map = m.cell_map(t);
      for (int k = 0; k < 3; ++k) dofs[k] = tri[k];
      int local = 3;
      for (int k = 0; k < 3; ++k) {
        const int e = topo_.cell_edges[t][k];
        const bool forward = tri[k] < tri[(k + 1) % 3];
        for (int s = 1; s < p; ++s, ++local) {
          const int s_global = forward ? s : p - s;
          const std::size_t g = edge_base + static_cast<std::size_t>(e) * per_edge + (s_global - 1);
          dofs[local] = static_cast<int>(g);
          dof_coords_[g] = map.map(element_.node_point(local));
        }
      }
      for (int i = 0; i < per_cell; ++i, ++local) {
        const std::size_t g = cell_base + t * per_cell + i;
        dofs[local] = static_cast<int>(g);
        dof_coords_[g] = map.map(element_.node_point(local));
      }
    }
  }

  void classify() {
    const Mesh& m = *mesh_;
    const int per_edge = element_.dofs_per_edge();
    const std::size_t nv = m.vertices.size();
    std::vector<char> essential(num_dofs(), 0);
    for (std::size_t e = 0; e < topo_.num_edges(); ++e) {
      const int marker = topo_.edge_marker[e];
      if (marker == 0 || bc_.at(marker) != BoundaryCondition::Dirichlet) continue;
      essential[topo_.edges[e][0]] = essential[topo_.edges[e][1]] = 1;
      for (int s = 0; s < per_edge; ++s) essential[nv + e * per_edge + s] = 1;
    }
    free_index_.assign(num_dofs(), -1);
    for (std::size_t d = 0; d < num_dofs(); ++d)
      if (!essential[d]) {
        free_index_[d] = static_cast<int>(free_dofs_.size());
        free_dofs_.push_back(static_cast<int>(d));
      }
  }

  std::shared_ptr<const Mesh> mesh_;
  LagrangeElement element_;
  BcAssignment bc_;
  MeshTopology topo_;
  std::vector<int> cell_dofs_;
  std::vector<Vec2> dof_coords_;
  std::vector<int> free_index_;
  std::vector<int> free_dofs_;
};

inline FeSpace build_space(std::shared_ptr<const Mesh> mesh, int p, const BcAssignment& bc) {
  return FeSpace(std::move(mesh), p, bc);
}

inline FeSpace build_space(const Mesh& mesh, int p, const BcAssignment& bc) {
  return FeSpace(std::make_shared<const Mesh>(mesh), p, bc);
}

/// Nodal interpolant of a scalar function (all DOFs, essential included).
template <class Fn>
std::vector<double> interpolate(const FeSpace& space, Fn&& f) {
  std::vector<double> out(space.num_dofs());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = f(space.dof_coord(d));
  return out;
}

/// Value and physical gradient of an FE function at a reference point of a cell.
template <class Scalar>
struct FeValue {
  Scalar value{};
  Scalar dx{};
  Scalar dy{};
};

template <class Scalar>
FeValue<Scalar> evaluate(const FeSpace& space, const std::vector<Scalar>& coeffs, std::size_t cell,
                         const Vec2& ref) {
  std::vector<double> v;
  std::vector<Vec2> g;
  space.element().eval(ref, v, g);
  const AffineMap map = space.mesh().cell_map(cell);
  const int* dofs = space.cell_dofs(cell);
  FeValue<Scalar> out;
  for (int i = 0; i < space.dofs_per_cell(); ++i) {
    const Vec2 grad = map.push_gradient(g[i]);
    const Scalar c = coeffs[dofs[i]];
    out.value += c * v[i];
    out.dx += c * grad.x;
    out.dy += c * grad.y;
  }
  return out;
}

}  // namespace magauge
