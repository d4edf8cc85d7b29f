// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/enrichment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>

namespace arbilomod
{

void EnrichmentConfig::validate() const
{
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw InvalidArgument("marking fraction must lie in (0, 1]");
  if (!(tol > 0.0))
    throw InvalidArgument("enrichment tolerance must be positive");
  if (max_iter < 0)
    throw InvalidArgument("iteration cap must be nonnegative");
}

std::vector<MarkedPair> mark(const std::vector<std::vector<double>> &indicators, double fraction)
{
  std::vector<MarkedPair> all;
  double total = 0.0;
  for (std::size_t q = 0; q < indicators.size(); ++q)
    for (std::size_t p = 0; p < indicators[q].size(); ++p)
    {
      const double v = indicators[q][p];
      if (!(v >= 0.0))
        throw InvalidArgument("indicators must be nonnegative");
      all.push_back({static_cast<int>(q), static_cast<int>(p), v});
      total += v;
    }
  std::vector<MarkedPair> out;
  if (!(total > 0.0))
    return out;
  std::stable_sort(all.begin(), all.end(), [](const MarkedPair &a, const MarkedPair &b) {
    if (a.value != b.value)
      return a.value > b.value;
    return std::tie(a.mu_index, a.patch) < std::tie(b.mu_index, b.patch);
  });
  double sum = 0.0;
  for (const MarkedPair &m : all)
  {
    if (sum / total >= fraction)
      break;
    out.push_back(m);
    sum += m.value;
  }
  return out;
}

double ConvergenceLog::final_residual() const
{
  if (records.empty())
    return std::numeric_limits<double>::quiet_NaN();
  const auto &r = records.back().residual_norm;
  return r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
}

void ConvergenceLog::write_csv(std::ostream &out) const
{
  out << "iteration,mu,residual_norm,delta_rel,delta_rel_loc,true_rel_error,reduced_dim\n";
  out.precision(10);
  for (const IterationRecord &r : records)
    for (std::size_t q = 0; q < r.mu.size(); ++q)
    {
      out << r.iteration << ',' << r.mu[q] << ',' << r.residual_norm[q] << ','
          << r.delta_rel[q] << ',' << r.delta_rel_loc[q] << ',';
      if (q < r.true_rel_error.size())
        out << r.true_rel_error[q];
      out << ',' << r.reduced_dim << '\n';
    }
}

Enricher::Enricher(ModelContext ctx, EnrichmentConfig cfg)
  : ctx_(std::move(ctx)), cfg_(cfg)
{
  cfg_.validate();
  ctx_.greedy.validate();
  grams_.resize(ctx_.dec.num_spaces());
}

const SparseMatrix &Enricher::footprint_gram(int s)
{
  if (!grams_[s])
    grams_[s] = restrict_matrix(ctx_.gram, ctx_.dec.space(s).footprint);
  return *grams_[s];
}

Vector Enricher::local_solve(int vertex, double mu, const Vector &residual) const
{
  const IndexList &fp = ctx_.dec.overlapping_dofs(vertex);
  const SparseMatrix a =
      mu * restrict_matrix(ctx_.sys.a_high(), fp) + restrict_matrix(ctx_.sys.a_full(), fp);
  const SparseSpdSolver solver(a);
  return solver.solve(restrict_vector(residual, fp));
}

EnrichmentStep Enricher::enrich_once(const std::vector<MarkedPair> &marked,
                                     const std::vector<ReducedSolution> &solutions)
{
  EnrichmentStep step;
  if (marked.empty())
    return step;
  const auto &verts = ctx_.dec.vertices();

  std::map<int, Vector> residuals;
  for (const MarkedPair &m : marked)
    if (!residuals.count(m.mu_index))
      residuals[m.mu_index] =
          ctx_.est.residual(solutions.at(m.mu_index).field, ctx_.xi.at(m.mu_index));

  std::vector<Vector> local(marked.size());
  parallel_for(marked.size(), ctx_.threads, [&](std::size_t i) {
    const MarkedPair &m = marked[i];
    local[i] = local_solve(verts.at(m.patch), ctx_.xi[m.mu_index], residuals.at(m.mu_index));
  });

  std::set<int> guard;
  std::map<int, int> insertions;
  for (std::size_t i = 0; i < marked.size(); ++i)
  {
    const int v = verts[marked[i].patch];
    const Space &vs = ctx_.dec.space(v);
    const auto parts = ctx_.ext.project_within(v, local[i]);
    std::vector<int> members = vs.subspaces;
    members.push_back(v);
    int best = -1;
    double best_norm = -1.0;
    Vector best_vec;
    for (std::size_t k = 0; k < members.size(); ++k)
    {
      const int z = members[k];
      if (ctx_.dec.space(z).codim == Codim::cell)
        continue;
      const SparseMatrix &g = footprint_gram(z);
      const Matrix &b = ctx_.rm.basis(z);
      Vector w = parts[k].col(0);
      for (int pass = 0; pass < 2 && b.cols() > 0; ++pass)
        w -= b * (b.transpose() * (g * w));
      const double nrm = std::sqrt(std::max(0.0, w.dot(g * w)));
      if (nrm > best_norm)
      {
        best_norm = nrm;
        best = z;
        best_vec = std::move(w);
      }
    }
    if (best < 0)
      continue;
    if (guard.count(best))
    {
      ++step.guard_skips;
      continue;
    }
    if (!(best_norm > cfg_.min_complement))
    {
      ++step.small_skips;
      continue;
    }
    ctx_.rm.append(best, best_vec / best_norm);
    guard.insert(best);
    step.enriched.push_back(best);
    step.max_insertions_per_space = std::max(step.max_insertions_per_space, ++insertions[best]);
  }

  std::set<int> cells;
  for (int z : step.enriched)
    for (int d : ctx_.dec.space(z).xi)
    {
      const int c = ctx_.dec.cell_of_domain(d);
      if (c >= 0)
        cells.insert(c);
    }
  step.regenerated_cells.assign(cells.begin(), cells.end());
  std::vector<Matrix> fresh(step.regenerated_cells.size());
  const std::vector<Matrix> &bases = ctx_.rm.bases();
  parallel_for(fresh.size(), ctx_.threads, [&](std::size_t i) {
    const int c = step.regenerated_cells[i];
    const Matrix warm = bases[c];
    fresh[i] = local_greedy(c, ctx_.greedy, bases, ctx_.sys, ctx_.dec, ctx_.gram, &warm)
                   .basis.vectors;
  });
  for (std::size_t i = 0; i < fresh.size(); ++i)
    ctx_.rm.set_basis(step.regenerated_cells[i], std::move(fresh[i]), ctx_.sys.revision());
  greedy_runs_ += static_cast<int>(fresh.size());
  return step;
}

ConvergenceLog Enricher::run(const std::function<Vector(double)> &oracle)
{
  ConvergenceLog log;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int it = 0;; ++it)
  {
    if (!ctx_.rm.assembled())
      ctx_.rm.assemble(ctx_.threads);
    IterationRecord rec;
    rec.iteration = it;
    rec.mu = ctx_.xi;
    rec.reduced_dim = ctx_.rm.dim();
    solutions_.clear();
    indicators_.clear();
    for (double mu : ctx_.xi)
    {
      solutions_.push_back(ctx_.rm.solve(mu));
      const Estimate e = ctx_.est.estimate(solutions_.back().field, mu);
      rec.residual_norm.push_back(e.residual_norm);
      rec.delta_rel.push_back(e.delta_rel.value_or(nan));
      rec.delta_rel_loc.push_back(e.delta_rel_loc.value_or(nan));
      indicators_.push_back(e.indicators);
      if (oracle)
      {
        const Vector u = oracle(mu);
        rec.true_rel_error.push_back(ctx_.est.norm(u - solutions_.back().field) /
                                     ctx_.est.norm(u));
      }
    }
    const double worst = *std::max_element(rec.residual_norm.begin(), rec.residual_norm.end());
    log.records.push_back(rec);
    if (worst < cfg_.tol)
    {
      log.converged = true;
      break;
    }
    if (it >= cfg_.max_iter)
      break;
    const auto marked = mark(indicators_, cfg_.fraction);
    if (marked.empty())
      break;
    const EnrichmentStep step = enrich_once(marked, solutions_);
    IterationRecord &last = log.records.back();
    last.marked = static_cast<int>(marked.size());
    last.enriched = static_cast<int>(step.enriched.size());
    last.guard_skips = step.guard_skips;
    last.small_skips = step.small_skips;
    last.cells_regenerated = static_cast<int>(step.regenerated_cells.size());
    last.max_insertions_per_space = step.max_insertions_per_space;
    log.iterations = it + 1;
    if (step.enriched.empty())
      break;
  }
  return log;
}

}  // namespace arbilomod
