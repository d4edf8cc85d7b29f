// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "arbilomod/common.hpp"
#include "arbilomod/decomposition.hpp"
#include "arbilomod/fem.hpp"

namespace arbilomod
{

struct ReducedSolution
{
  double mu = 0.0;
  Vector coefficients;
  Vector field;  // over all nodes, including the shift
};

// Global reduced problem over the direct sum of all local reduced spaces. Reduced operators
// are collected from per-domain blocks, which are recomputed only when a basis meeting the
// domain or the domain's operator changed.
class ReducedModel
{
public:
  ReducedModel(const AffineSystem &sys, const Decomposition &dec);

  // Basis columns live on the footprint of the space.
  void set_basis(int s, Matrix vectors, int revision);
  // Appends one column to the basis of s.
  void append(int s, const Vector &v);
  void clear_basis(int s);
  // Re-tags every basis with the current system revision.
  void retag(int revision);
  const Matrix &basis(int s) const { return bases_[s]; }
  const std::vector<Matrix> &bases() const { return bases_; }
  int basis_revision(int s) const { return revisions_[s]; }
  int basis_size(int s) const { return static_cast<int>(bases_[s].cols()); }

  // Rebuilds stale domain blocks and the global reduced operators.
  void assemble(int threads = 1);
  bool assembled() const { return assembled_; }
  // Domains whose block was recomputed by the last assemble().
  const std::vector<int> &recomputed() const { return recomputed_; }

  Index dim() const { return dim_; }
  Index offset(int s) const { return offsets_[s]; }
  const Matrix &a_high() const { return a_high_; }
  const Matrix &a_full() const { return a_full_; }
  const Vector &f_high() const { return f_high_; }
  const Vector &f_full() const { return f_full_; }

  // Dense Cholesky solve of the reduced system; throws ConditioningError when a pivot falls
  // below the relative floor.
  Vector solve_coefficients(double mu) const;
  Vector reconstruct(const Vector &coefficients) const;
  ReducedSolution solve(double mu) const;

  static constexpr double pivot_floor = 1e-13;

private:
  struct DomainBlock
  {
    std::uint64_t key = 0;
    std::vector<std::pair<int, std::uint64_t>> members;  // (space, basis version)
    Matrix a_high, a_full;
    Vector f_high, f_full;
    bool valid = false;
  };

  std::vector<std::pair<int, std::uint64_t>> members_of(int d) const;
  void build_block(int d);

  const AffineSystem &sys_;
  const Decomposition &dec_;
  std::vector<Matrix> bases_;
  std::vector<int> revisions_;
  std::vector<std::uint64_t> versions_;
  std::uint64_t next_version_ = 1;
  std::vector<DomainBlock> blocks_;
  std::vector<int> recomputed_;
  std::vector<Index> offsets_;
  Index dim_ = 0;
  bool assembled_ = false;
  Matrix a_high_, a_full_;
  Vector f_high_, f_full_;
};

}  // namespace arbilomod
