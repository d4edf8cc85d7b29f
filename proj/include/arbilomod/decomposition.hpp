// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <vector>

#include "arbilomod/common.hpp"
#include "arbilomod/fem.hpp"

namespace arbilomod
{

// Sorted set of domain indices identifying a basic space.
using SpaceId = std::vector<int>;

enum class Codim : int
{
  cell = 0,
  face = 1,
  vertex = 2
};

struct Space
{
  int index = 0;
  SpaceId xi;
  Codim codim = Codim::cell;
  IndexList dofs;        // U_xi: free nodes whose adjacent domains are exactly xi
  IndexList footprint;   // dofs of every U_zeta with zeta a subset of xi
  std::vector<int> subspaces;  // spaces zeta strictly contained in xi
  // Position of each subspace's dofs (and of the space itself) inside `footprint`.
  std::map<int, IndexList> positions;
  // Closed shared region of the domains in xi, in fine lattice units [i0, i1] x [j0, j1].
  std::array<int, 4> box{};
};

// Partition of the free dofs into cell, face and vertex spaces of a rectangular domain
// decomposition, together with the neighbourhoods used for training and estimation.
class Decomposition
{
public:
  Decomposition(const Mesh &mesh, const DofHandler &dofs, const DomainGrid &grid);

  const DomainGrid &grid() const { return grid_; }
  const std::vector<Space> &spaces() const { return spaces_; }
  const Space &space(int s) const { return spaces_[s]; }
  int num_spaces() const { return static_cast<int>(spaces_.size()); }
  const std::vector<int> &cells() const { return by_codim_[0]; }
  const std::vector<int> &faces() const { return by_codim_[1]; }
  const std::vector<int> &vertices() const { return by_codim_[2]; }
  const std::vector<int> &of_codim(Codim c) const { return by_codim_[static_cast<int>(c)]; }
  // Space index of the cell space of domain d (-1 if that domain has no free interior dof).
  int cell_of_domain(int d) const { return cell_of_domain_[d]; }
  int find(const SpaceId &xi) const;
  // Space index per node, -1 for Dirichlet nodes.
  const std::vector<int> &node_space() const { return node_space_; }
  // Domains adjacent to a node.
  SpaceId adjacent_domains(Index node) const;

  // Domains whose closure meets the closed region shared by the domains of xi.
  std::vector<int> neighbourhood(int s) const;
  // Dofs of U_zeta with zeta inside the neighbourhood of face s.
  IndexList training_dofs(int s) const;
  // Dofs of U_zeta meeting but not contained in the neighbourhood of face s.
  IndexList coupling_dofs(int s) const;
  // Spaces zeta that meet xi without being contained in it.
  std::vector<int> coupling_spaces(int s) const;
  // Spaces containing domain d.
  const std::vector<int> &spaces_of_domain(int d) const { return spaces_of_domain_[d]; }
  // Overlapping estimator space of a vertex: the footprint of the vertex space.
  const IndexList &overlapping_dofs(int s) const { return spaces_[s].footprint; }
  // Colour 0..3 of a vertex space; patches of equal colour have disjoint interiors.
  int colour(int s) const;

  // Local indices of a space's footprint inside the closed-domain node list of d.
  const IndexList &footprint_in_domain(int s, int d) const;
  // Positions in the footprint of s of the nodes that lie in the closed domain d.
  const IndexList &domain_in_footprint(int s, int d) const;

private:
  const Mesh *mesh_;
  DomainGrid grid_;
  std::vector<Space> spaces_;
  std::array<std::vector<int>, 3> by_codim_;
  std::vector<int> cell_of_domain_;
  std::vector<int> node_space_;
  std::vector<std::vector<int>> spaces_of_domain_;
  std::map<std::pair<int, int>, IndexList> fp_in_dom_, dom_in_fp_;
  std::vector<IndexList> domain_nodes_;
};

// Harmonic-type extension of basic-space functions into their extension space, using
// local solves at a fixed parameter in the cell spaces.
class ExtensionOperator
{
public:
  ExtensionOperator(const AffineSystem &sys, const Decomposition &dec, double mu_bar = 1.0e5);

  // Refactorizes the cells of the given domains after a geometry change.
  void update(const std::vector<int> &domains);
  double mu_bar() const { return mu_bar_; }

  // Extends columns of data given on U_xi; result is on the footprint of xi.
  Matrix extend(int s, const Matrix &data) const;
  Vector extend(int s, const Vector &data) const;
  // Values the vertex extension assigns to the dofs of face f for unit vertex data.
  const Vector &vertex_trace(int vertex, int face) const;

  // Parts of a field (given over all nodes) in every space, each on that space's footprint.
  std::vector<Matrix> project(const Matrix &field) const;
  std::vector<Vector> project(const Vector &field) const;
  // Part of a field in one space. `values(nodes)` returns the rows of the field at the
  // given global nodes.
  Matrix project_part(int s, const std::function<Matrix(const IndexList &)> &values) const;
  Matrix project_part(int s, const Matrix &field) const;
  // Parts of a field supported on the footprint of s (given there), for s and all its
  // subspaces; returned in the order of Space::subspaces followed by s itself.
  std::vector<Matrix> project_within(int s, const Matrix &on_footprint) const;

private:
  void factor_cell(int c);

  const AffineSystem &sys_;
  const Decomposition &dec_;
  double mu_bar_;
  std::vector<SparseSpdSolver> cell_solver_;         // per space index (cells only)
  std::map<std::pair<int, int>, SparseMatrix> coupling_;  // (space, cell) -> A[cell, footprint]
  std::map<std::pair<int, int>, Vector> vertex_trace_;
};

// Field over all nodes from values on a footprint.
Vector footprint_to_global(const Space &sp, const Vector &values, Index total);

}  // namespace arbilomod
