// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <vector>

#include "arbilomod/common.hpp"
#include "arbilomod/decomposition.hpp"
#include "arbilomod/fem.hpp"
#include "arbilomod/training.hpp"

namespace arbilomod
{

// sigma_min / (c_F^2 + 1) with sigma_min = 1 and c_F = 1 / (sqrt(2) pi).
double alpha_lb_default(double mu);
// Coercivity of the H1 norm for this problem with Dirichlet data on x = 0 and x = 1 only:
// the Friedrichs constant is 1 / pi.
double alpha_lb_rigorous(double mu);

struct CellGreedyConfig
{
  double eps_greedy = 1.0e-3;
  std::vector<double> xi = default_training_set();
  std::function<double(double)> alpha_lb = alpha_lb_default;

  void validate() const;
};

// Local problems of one cell space: for every parameter and every coupling function psi_j
// (the reduced bases of all spaces meeting the cell, plus the shift for the source term)
// find u in V_xi with a_mu(u, phi) = -a_mu(psi_j, phi).
class CellProblem
{
public:
  CellProblem(int cell, const std::vector<Matrix> &bases, const AffineSystem &sys,
              const Decomposition &dec, const SparseMatrix &gram);

  int cell() const { return cell_; }
  Index dim() const { return static_cast<Index>(gc_.rows()); }
  // Number of right-hand sides per parameter; the last one is the source term.
  Index num_rhs() const { return g_high_.cols(); }
  const SparseMatrix &gram() const { return gc_; }

  // Right-hand sides g_mu as columns (functionals on the cell dofs).
  Matrix rhs(double mu) const { return mu * g_high_ + g_full_; }
  SparseMatrix op(double mu) const { return mu * a_high_ + a_full_; }
  // Exact local solutions for all right-hand sides at mu.
  Matrix truth(double mu) const;
  Vector truth(double mu, Index j) const;

  // Galerkin solutions in span(basis) (Gram-orthonormal columns) and their estimator
  // values Delta_cell = ||R||_{V'} / alpha(mu) per right-hand side.
  Matrix reduced(const Matrix &basis, double mu) const;
  Vector estimates(const Matrix &basis, double mu,
                   const std::function<double(double)> &alpha) const;

  // Riesz representative of functionals on the cell dofs.
  Matrix riesz(const Matrix &f) const { return riesz_.solve(f); }

private:
  friend class CellGreedy;
  int cell_;
  SparseMatrix a_high_, a_full_, gc_;
  Matrix g_high_, g_full_;
  Matrix rg_high_, rg_full_;
  SparseSpdSolver riesz_;
};

struct CellGreedyResult
{
  LocalBasis basis;
  int iterations = 0;
  double max_estimate = 0.0;
  std::vector<double> history;  // max estimate before each insertion, then the final one
};

// Certified greedy over parameters x right-hand sides. A warm start basis (Gram-orthonormal
// on the cell dofs) is kept and extended.
CellGreedyResult local_greedy(const CellProblem &problem, const CellGreedyConfig &cfg,
                              const Matrix *warm_start = nullptr);

CellGreedyResult local_greedy(int cell, const CellGreedyConfig &cfg,
                              const std::vector<Matrix> &bases, const AffineSystem &sys,
                              const Decomposition &dec, const SparseMatrix &gram,
                              const Matrix *warm_start = nullptr);

}  // namespace arbilomod
