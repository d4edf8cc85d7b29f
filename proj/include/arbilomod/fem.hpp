// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "arbilomod/common.hpp"
#include "arbilomod/geometry.hpp"

namespace arbilomod
{

// Crossed P1 mesh of the unit square: every one of the n x n squares is split into four
// triangles through its centre node.
struct Mesh
{
  enum class NodeKind : unsigned char
  {
    lattice,
    center
  };

  int n = 0;
  std::vector<std::array<double, 2>> nodes;
  std::vector<std::array<Index, 3>> triangles;

  Index num_nodes() const { return static_cast<Index>(nodes.size()); }
  Index num_triangles() const { return static_cast<Index>(triangles.size()); }
  Index lattice(int i, int j) const { return j * (n + 1) + i; }
  Index center(int ci, int cj) const { return (n + 1) * (n + 1) + cj * n + ci; }
  NodeKind kind(Index v) const
  {
    return v < (n + 1) * (n + 1) ? NodeKind::lattice : NodeKind::center;
  }
  // Triangles of square (ci, cj) are 4 * (cj * n + ci) + k, k = 0..3.
  Index square_of(Index t) const { return t / 4; }
  std::array<double, 2> centroid(Index t) const;
  double triangle_area(Index t) const;
};

Mesh build_mesh(int n);

// Dirichlet nodes are those with x = 0 or x = 1; top and bottom carry natural conditions.
struct DofHandler
{
  Index total = 0;
  IndexList free_dofs;
  IndexList dirichlet_dofs;
  std::vector<char> is_dirichlet;
  std::vector<Index> free_index;  // position in free_dofs, -1 for Dirichlet nodes

  explicit DofHandler(const Mesh &mesh);
  DofHandler() = default;
};

// Element matrices of the P1 Laplacian and mass on triangle t.
Eigen::Matrix3d element_stiffness(const Mesh &mesh, Index t);
Eigen::Matrix3d element_mass(const Mesh &mesh, Index t);

// Stiffness on the triangles selected by mask (all triangles if mask is empty), over all
// nodes and without boundary conditions.
SparseMatrix assemble_stiffness(const Mesh &mesh, const std::vector<char> &mask = {});
SparseMatrix assemble_mass(const Mesh &mesh);

// Full H^1 Gram matrix (mass plus stiffness) over all nodes.
SparseMatrix h1_gram(const Mesh &mesh);

// Indicator of triangles whose centroid lies in the high-conductivity region.
std::vector<char> high_triangles(const Mesh &mesh, const GeometryModel &geom);

// Equidistant per_side x per_side decomposition of the mesh; domain index is
// row * per_side + col.
struct DomainGrid
{
  int n = 0;
  int per_side = 0;

  DomainGrid(int n, int per_side);
  DomainGrid() = default;
  int count() const { return per_side * per_side; }
  int cells_per_domain() const { return n / per_side; }
  int domain_of_square(int ci, int cj) const
  {
    const int m = cells_per_domain();
    return (cj / m) * per_side + ci / m;
  }
  int col(int d) const { return d % per_side; }
  int row(int d) const { return d / per_side; }
  // Nodes of the closed domain, sorted.
  IndexList closed_nodes(const Mesh &mesh, int d) const;
  IndexList triangles(const Mesh &mesh, int d) const;
};

// The two affine components restricted to the triangles of one domain, in the local
// numbering given by `nodes`.
struct DomainOperator
{
  IndexList nodes;
  SparseMatrix a_high;
  SparseMatrix a_full;
  std::uint64_t key = 0;  // hash of the domain's geometry restriction
};

// a_mu = mu * a_high + a_full on free dofs; f_mu = -a_mu(u_s, .). Matrices are stored over
// all nodes; callers restrict to free dofs.
class AffineSystem
{
public:
  AffineSystem(std::shared_ptr<const Mesh> mesh, const GeometryModel &geom, int per_side);

  // Rebuilds the components of the given domains for a new geometry (all domains if the
  // list is empty and the geometry differs). Returns the number of domains rebuilt.
  int update_geometry(const GeometryModel &geom, const std::vector<int> &domains);

  const Mesh &mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const DofHandler &dofs() const { return dofs_; }
  const DomainGrid &grid() const { return grid_; }
  const GeometryModel &geometry() const { return geom_; }
  int revision() const { return revision_; }
  // Used when restoring a saved session.
  void set_revision(int revision) { revision_ = revision; }
  const std::vector<char> &high() const { return high_; }

  const SparseMatrix &a_high() const { return a_high_; }
  const SparseMatrix &a_full() const { return a_full_; }
  SparseMatrix operator_at(double mu) const;
  const Vector &shift() const { return shift_; }
  // Load vector components -a^b u_s over all nodes.
  const Vector &f_high() const { return f_high_; }
  const Vector &f_full() const { return f_full_; }
  Vector rhs(double mu) const { return mu * f_high_ + f_full_; }
  const DomainOperator &domain(int d) const { return domains_[d]; }

  std::size_t cache_hits() const { return cache_hits_; }
  std::size_t cache_misses() const { return cache_misses_; }

private:
  void build_domain(int d);
  void rebuild_global();

  std::shared_ptr<const Mesh> mesh_;
  DofHandler dofs_;
  DomainGrid grid_;
  GeometryModel geom_;
  int revision_ = 0;
  std::vector<char> high_;
  std::vector<DomainOperator> domains_;
  SparseMatrix a_high_, a_full_;
  Vector shift_, f_high_, f_full_;
  std::size_t cache_hits_ = 0, cache_misses_ = 0;
};

// Sub-matrix A[rows, cols].
SparseMatrix restrict_matrix(const SparseMatrix &a, const IndexList &rows, const IndexList &cols);
inline SparseMatrix restrict_matrix(const SparseMatrix &a, const IndexList &idx)
{
  return restrict_matrix(a, idx, idx);
}
Vector restrict_vector(const Vector &v, const IndexList &idx);
Matrix restrict_rows(const Matrix &m, const IndexList &idx);
void scatter_add(Vector &target, const IndexList &idx, const Vector &values);

using SparseLLT = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<Index>>;

// Sparse symmetric positive definite direct solver. Copies share the factorization.
class SparseSpdSolver
{
public:
  SparseSpdSolver() = default;
  explicit SparseSpdSolver(const SparseMatrix &a) { factorize(a); }
  void factorize(const SparseMatrix &a);
  Vector solve(const Vector &b) const;
  Matrix solve(const Matrix &b) const;
  Index size() const { return size_; }
  bool empty() const { return size_ == 0; }

private:
  std::shared_ptr<SparseLLT> llt_;
  Index size_ = 0;
};

// Full-order solver for one geometry: factorizations are made per parameter on demand.
class FullSolver
{
public:
  explicit FullSolver(const AffineSystem &sys);
  // Full coefficient vector u = u_0 + u_s.
  Vector solve(double mu);

private:
  const AffineSystem &sys_;
  SparseMatrix high_ff_, full_ff_;
  std::unique_ptr<SparseLLT> llt_;
};

Vector solve_full(const AffineSystem &sys, double mu);

// Riesz solver for the Gram matrix restricted to an index set (a subspace of free dofs).
class RieszSolver
{
public:
  RieszSolver() = default;
  RieszSolver(const SparseMatrix &gram, IndexList subspace);
  const IndexList &subspace() const { return subspace_; }
  // Functional and result are given on the subspace.
  Vector riesz_local(const Vector &f_local) const;
  // Dual norm of a functional given over all nodes.
  double dual_norm(const Vector &f_global) const;
  double dual_norm_local(const Vector &f_local) const;

private:
  IndexList subspace_;
  SparseSpdSolver solver_;
};

// sqrt(f^T G_S^{-1} f) with G_S the Gram restricted to `subspace`; 0 for an empty subspace.
double dual_norm(const SparseMatrix &gram, const Vector &f, const IndexList &subspace);

// Sorted union / intersection / membership helpers on sorted index lists.
IndexList set_union(const IndexList &a, const IndexList &b);
IndexList set_difference(const IndexList &a, const IndexList &b);
bool set_contains(const IndexList &sorted, Index v);

}  // namespace arbilomod
