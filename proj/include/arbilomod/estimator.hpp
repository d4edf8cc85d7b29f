// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "arbilomod/common.hpp"
#include "arbilomod/decomposition.hpp"
#include "arbilomod/fem.hpp"

namespace arbilomod
{

struct EstimatorConstants
{
  std::function<double(double)> alpha_lb;  // defaults to alpha_lb_default
  std::function<double(double)> gamma_ub;  // defaults to 1 + mu
  double c_pu = 1.0;
  int J = 4;

  EstimatorConstants();
};

// Delta / (norm - Delta); empty when norm <= Delta (the bound carries no information).
std::optional<double> relative_bound(double delta, double norm);

struct Estimate
{
  double mu = 0.0;
  double residual_norm = 0.0;  // ||R||_{V_h'}
  double delta = 0.0;
  double delta_loc = 0.0;
  double norm = 0.0;  // ||u~||_V
  std::optional<double> delta_rel, delta_rel_loc;
  std::vector<double> indicators;  // ||R||_{O_xi'} per vertex space, in Decomposition order
};

// Upper bound for c_pu from the partition of unity of coarse hats clamped to one towards the
// boundary, with the intersections of the reduced space and the patches taken as {0}. Dense
// generalized eigenproblem on the free dofs; meant for small meshes.
double pu_stability_bound(const Mesh &mesh, const DofHandler &dofs, const Decomposition &dec,
                          const SparseMatrix &gram);

// Residual-based a posteriori error estimators. Riesz solves use the H1 Gram on the free
// dofs and on each overlapping vertex patch; both are geometry independent and factorized
// once.
class Estimator
{
public:
  Estimator(const AffineSystem &sys, const Decomposition &dec, const SparseMatrix &gram,
            EstimatorConstants consts = {}, int threads = 1);

  const EstimatorConstants &constants() const { return consts_; }
  void set_constants(EstimatorConstants c) { consts_ = std::move(c); }

  // <f_mu, phi> - a_mu(u, phi) over all nodes; zero on Dirichlet nodes.
  Vector residual(const Vector &u, double mu) const;
  double dual_norm(const Vector &functional) const;
  std::vector<double> indicators(const Vector &functional) const;
  // H1 norm of a field given over all nodes.
  double norm(const Vector &u) const;
  // H1 norm of a field vanishing on the Dirichlet nodes (only free values are used).
  double free_norm(const Vector &u) const;
  Estimate estimate(const Vector &u, double mu) const;

private:
  const AffineSystem &sys_;
  const Decomposition &dec_;
  const SparseMatrix &gram_;
  EstimatorConstants consts_;
  int threads_;
  RieszSolver global_;
  std::vector<RieszSolver> patches_;  // per vertex, in dec.vertices() order
};

}  // namespace arbilomod
