// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "arbilomod/cell_greedy.hpp"
#include "instance.hpp"

using namespace arbilomod;
using namespace arbilomod::testing;

namespace
{

// Trained face and vertex bases for every non-cell space of an instance.
std::vector<Matrix> coupling_bases(const Instance &in, int samples)
{
  std::vector<Matrix> bases(in.dec->num_spaces());
  TrainingConfig cfg;
  cfg.samples = samples;
  for (int f : in.dec->faces())
    bases[f] = train_face(f, cfg, *in.sys, *in.dec, *in.ext, in.gram).vectors;
  for (int v : in.dec->vertices())
    bases[v] = vertex_basis(v, *in.dec, *in.ext, in.gram).vectors;
  return bases;
}

double gram_norm(const SparseMatrix &g, const Vector &v)
{
  return std::sqrt(v.dot(g * v));
}

struct Trained
{
  Instance in{32, 4, stripes()};
  std::vector<Matrix> bases = coupling_bases(in, 8);
};

const Trained &trained()
{
  static const Trained t;
  return t;
}

}  // namespace

TEST(CoercivityBound, ClosedForm)
{
  const double pi2 = std::numbers::pi * std::numbers::pi;
  EXPECT_NEAR(alpha_lb_default(1.0), 2 * pi2 / (2 * pi2 + 1), 1e-15);
  EXPECT_NEAR(alpha_lb_default(1e5), 0.95178, 1e-5);
  EXPECT_NEAR(alpha_lb_rigorous(1.0), pi2 / (pi2 + 1), 1e-15);
}

TEST(CellGreedy, EmptyCouplingAndZeroSourceGiveEmptyBasis)
{
  Instance in(16, 4);
  const std::vector<Matrix> none(in.dec->num_spaces());
  CellGreedyConfig cfg;
  for (int c : in.dec->cells())
  {
    const auto res = local_greedy(c, cfg, none, *in.sys, *in.dec, in.gram);
    EXPECT_EQ(res.basis.size(), 0);
    EXPECT_EQ(res.iterations, 0);
  }
}

TEST(CellGreedy, CellsWithoutHighRegionNeedNoBasis)
{
  // Coupling functions are a-harmonic at mu_bar in the cells; without a high-conductivity
  // part the operator does not depend on mu, so every right-hand side vanishes.
  const auto &t = trained();
  const CellProblem p(t.in.dec->cell_of_domain(5), t.bases, *t.in.sys, *t.in.dec, t.in.gram);
  EXPECT_EQ(local_greedy(p, CellGreedyConfig{}).basis.size(), 0);
  for (double mu : {1.0, 1e5})
    EXPECT_LT(p.estimates(Matrix(p.dim(), 0), mu, alpha_lb_default).maxCoeff(), 1e-12);
}

TEST(CellGreedy, EmptySpaceEstimateIsScaledDualNorm)
{
  const auto &t = trained();
  const int cell = t.in.dec->cell_of_domain(8);
  const CellProblem p(cell, t.bases, *t.in.sys, *t.in.dec, t.in.gram);
  // One rhs per coupling basis function plus the source.
  Index expected = 1;
  for (int z : t.in.dec->coupling_spaces(cell))
    expected += t.bases[z].cols();
  EXPECT_EQ(p.num_rhs(), expected);
  const Matrix g(p.gram());
  const Eigen::LLT<Matrix> llt(g);
  for (double mu : {1.0, 1e3, 1e5})
  {
    const Vector est = p.estimates(Matrix(p.dim(), 0), mu, alpha_lb_default);
    const Matrix rhs = p.rhs(mu);
    for (Index j = 0; j < rhs.cols(); ++j)
    {
      const double oracle = std::sqrt(rhs.col(j).dot(llt.solve(rhs.col(j)))) / alpha_lb_default(mu);
      EXPECT_NEAR(est[j], oracle, 1e-10 * (1 + oracle));
    }
  }
}

TEST(CellGreedy, CertifiedTerminationAndOrthonormality)
{
  const auto &t = trained();
  CellGreedyConfig cfg;
  cfg.eps_greedy = 1e-4;
  for (int d : {0, 4, 8, 10})
  {
    const int cell = t.in.dec->cell_of_domain(d);
    const CellProblem p(cell, t.bases, *t.in.sys, *t.in.dec, t.in.gram);
    const auto res = local_greedy(p, cfg);
    EXPECT_GT(res.basis.size(), 0);
    EXPECT_LE(res.max_estimate, cfg.eps_greedy);
    EXPECT_LT(orthonormality_defect(res.basis.vectors, Matrix(p.gram())), 1e-8);
    // Independent re-evaluation of the estimator on the final basis.
    for (double mu : cfg.xi)
      EXPECT_LE(p.estimates(res.basis.vectors, mu, cfg.alpha_lb).maxCoeff(),
                cfg.eps_greedy * (1 + 1e-8));
    // Selected maxima never increase.
    for (std::size_t k = 1; k < res.history.size(); ++k)
      EXPECT_LE(res.history[k], res.history[k - 1] * (1 + 1e-12)) << d << " " << k;
  }
}

TEST(CellGreedy, EstimatorBoundsTrueLocalError)
{
  const auto &t = trained();
  const int cell = t.in.dec->cell_of_domain(8);
  const CellProblem p(cell, t.bases, *t.in.sys, *t.in.dec, t.in.gram);
  CellGreedyConfig cfg;
  cfg.eps_greedy = 1e-6;
  const Matrix full = local_greedy(p, cfg).basis.vectors;
  ASSERT_GT(full.cols(), 4);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> logmu(0.0, 5.0);
  std::uniform_int_distribution<Index> pick_j(0, p.num_rhs() - 1), pick_k(0, full.cols() - 1);
  for (int trial = 0; trial < 30; ++trial)
  {
    const double mu = std::pow(10.0, logmu(rng));
    const Index j = pick_j(rng);
    const Matrix basis = full.leftCols(pick_k(rng));
    const Vector u = p.truth(mu, j);
    const Vector ur = p.reduced(basis, mu).col(j);
    const double err = gram_norm(p.gram(), u - ur);
    const double est = p.estimates(basis, mu, alpha_lb_default)[j];
    EXPECT_GE(est * (1 + 1e-9) + 1e-13, err) << trial;
  }
}

TEST(CellGreedy, ExactSolutionHasVanishingEstimate)
{
  const auto &t = trained();
  const int cell = t.in.dec->cell_of_domain(8);
  const CellProblem p(cell, t.bases, *t.in.sys, *t.in.dec, t.in.gram);
  const double mu = 1e3;
  const Index j = p.num_rhs() - 1;
  Vector u = p.truth(mu, j);
  const double scale = p.estimates(Matrix(p.dim(), 0), mu, alpha_lb_default)[j];
  ASSERT_GT(scale, 0.0);
  u /= gram_norm(p.gram(), u);
  EXPECT_LE(p.estimates(Matrix(u), mu, alpha_lb_default)[j], 1e-9 * scale);
}

TEST(CellGreedy, WarmStartKeepsCertifiedBasis)
{
  const auto &t = trained();
  const int cell = t.in.dec->cell_of_domain(8);
  const CellProblem p(cell, t.bases, *t.in.sys, *t.in.dec, t.in.gram);
  CellGreedyConfig cfg;
  const auto first = local_greedy(p, cfg);
  const auto again = local_greedy(p, cfg, &first.basis.vectors);
  EXPECT_EQ(again.iterations, 0);
  EXPECT_EQ(again.basis.size(), first.basis.size());
  cfg.eps_greedy = 1e-5;
  const auto finer = local_greedy(p, cfg, &first.basis.vectors);
  EXPECT_GE(finer.basis.size(), first.basis.size());
  EXPECT_LE(finer.max_estimate, 1e-5);
  EXPECT_LT((finer.basis.vectors.leftCols(first.basis.size()) - first.basis.vectors)
                .cwiseAbs()
                .maxCoeff(),
            1e-10);
}

TEST(CellGreedy, InvalidConfiguration)
{
  CellGreedyConfig cfg;
  cfg.eps_greedy = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.eps_greedy = 1e-3;
  cfg.alpha_lb = [](double) { return 0.0; };
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}
