// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "arbilomod/cell_greedy.hpp"
#include "arbilomod/common.hpp"
#include "arbilomod/decomposition.hpp"
#include "arbilomod/estimator.hpp"
#include "arbilomod/fem.hpp"
#include "arbilomod/reduced.hpp"

namespace arbilomod
{

struct EnrichmentConfig
{
  double fraction = 0.5;     // Doerfler marking fraction d
  double tol = 1.0e-2;       // threshold on max_mu ||R_mu||_{V_h'}
  int max_iter = 200;
  double min_complement = 1.0e-12;

  void validate() const;
};

struct MarkedPair
{
  int mu_index = 0;
  int patch = 0;  // position in Decomposition::vertices()
  double value = 0.0;
};

// Largest indicators first (ties by lowest (mu index, patch)) until the marked mass reaches
// fraction * total mass. indicators[q][p] belongs to parameter q and patch p.
std::vector<MarkedPair> mark(const std::vector<std::vector<double>> &indicators, double fraction);

struct IterationRecord
{
  int iteration = 0;
  std::vector<double> mu;
  std::vector<double> residual_norm;
  std::vector<double> delta_rel, delta_rel_loc;  // NaN where not applicable
  std::vector<double> true_rel_error;            // empty without oracle
  Index reduced_dim = 0;
  int marked = 0;
  int enriched = 0;
  int guard_skips = 0;
  int small_skips = 0;
  int cells_regenerated = 0;
  int max_insertions_per_space = 0;
};

struct ConvergenceLog
{
  std::vector<IterationRecord> records;
  bool converged = false;
  int iterations = 0;  // enrichment steps performed

  double final_residual() const;
  // Columns: iteration, mu, residual_norm, delta_rel, delta_rel_loc, true_rel_error,
  // reduced_dim.
  void write_csv(std::ostream &out) const;
};

// Everything an enrichment run reads or updates.
struct ModelContext
{
  const AffineSystem &sys;
  const Decomposition &dec;
  const ExtensionOperator &ext;
  const SparseMatrix &gram;
  const Estimator &est;
  ReducedModel &rm;
  CellGreedyConfig greedy;
  std::vector<double> xi;
  int threads = 1;
};

struct EnrichmentStep
{
  std::vector<int> enriched;  // spaces that received a vector
  int guard_skips = 0;
  int small_skips = 0;
  std::vector<int> regenerated_cells;
  int max_insertions_per_space = 0;
};

class Enricher
{
public:
  Enricher(ModelContext ctx, EnrichmentConfig cfg);

  // Local solves for the marked pairs, selective enrichment of face and vertex spaces,
  // then regeneration of every cell whose coupling gained a vector.
  EnrichmentStep enrich_once(const std::vector<MarkedPair> &marked,
                             const std::vector<ReducedSolution> &solutions);

  // Solves at every training parameter; oracle(mu) returns the full solution.
  ConvergenceLog run(const std::function<Vector(double)> &oracle = {});

  // Patch indicators of the last evaluated state, per parameter.
  const std::vector<std::vector<double>> &last_indicators() const { return indicators_; }
  const std::vector<ReducedSolution> &last_solutions() const { return solutions_; }
  int greedy_runs() const { return greedy_runs_; }

private:
  const SparseMatrix &footprint_gram(int s);
  Vector local_solve(int vertex, double mu, const Vector &residual) const;

  ModelContext ctx_;
  EnrichmentConfig cfg_;
  std::vector<std::optional<SparseMatrix>> grams_;
  std::vector<std::vector<double>> indicators_;
  std::vector<ReducedSolution> solutions_;
  int greedy_runs_ = 0;
};

}  // namespace arbilomod
