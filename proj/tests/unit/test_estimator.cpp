// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "arbilomod/cell_greedy.hpp"
#include "arbilomod/estimator.hpp"
#include "instance.hpp"

using namespace arbilomod;
using namespace arbilomod::testing;

namespace
{

EstimatorConstants rigorous()
{
  EstimatorConstants c;
  c.alpha_lb = alpha_lb_rigorous;
  return c;
}

// Random perturbation of the full solution on the free dofs.
Vector perturbed(const Vector &u, const DofHandler &dofs, double scale, std::mt19937_64 &rng)
{
  std::normal_distribution<double> g(0.0, scale);
  Vector v = u;
  for (Index k : dofs.free_dofs)
    v[k] += g(rng);
  return v;
}

// Dual norm on the free dofs by dense Cholesky of the Gram matrix.
double dense_dual_norm(const SparseMatrix &gram, const IndexList &free, const Vector &r)
{
  const Matrix g = dense_gram(gram, free);
  const Vector rl = restrict_vector(r, free);
  return std::sqrt(rl.dot(g.llt().solve(rl)));
}

}  // namespace

TEST(RelativeBound, Algebra)
{
  EXPECT_DOUBLE_EQ(*relative_bound(1.0, 3.0), 0.5);
  EXPECT_FALSE(relative_bound(2.0, 2.0).has_value());
  EXPECT_FALSE(relative_bound(3.0, 1.0).has_value());
  EXPECT_DOUBLE_EQ(*relative_bound(0.0, 1.0), 0.0);
}

TEST(Estimator, ExactSolutionHasVanishingResidual)
{
  Instance in(8, 2, stripes());
  Estimator est(*in.sys, *in.dec, in.gram);
  FullSolver full(*in.sys);
  for (double mu : {1.0, 1e5})
  {
    const Vector u = full.solve(mu);
    const Estimate e = est.estimate(u, mu);
    EXPECT_LT(e.residual_norm, 1e-9 * mu);
    EXPECT_EQ(e.indicators.size(), in.dec->vertices().size());
  }
}

TEST(Estimator, ResidualAndDualNormMatchDenseOracle)
{
  Instance in(8, 2, stripes());
  Estimator est(*in.sys, *in.dec, in.gram);
  std::mt19937_64 rng(7);
  const Vector u = perturbed(in.sys->shift(), in.sys->dofs(), 0.1, rng);
  const double mu = 30.0;
  const Matrix a = Matrix(in.sys->operator_at(mu));
  Vector r = in.sys->rhs(mu) - a * (u - in.sys->shift());
  for (Index k : in.sys->dofs().dirichlet_dofs)
    r[k] = 0.0;
  EXPECT_LT((est.residual(u, mu) - r).cwiseAbs().maxCoeff(), 1e-10);
  const double oracle = dense_dual_norm(in.gram, in.sys->dofs().free_dofs, r);
  EXPECT_NEAR(est.dual_norm(r), oracle, 1e-10 * oracle);
}

TEST(Estimator, BoundsTrueErrorFromAbove)
{
  Instance in(8, 2, stripes());
  Estimator est(*in.sys, *in.dec, in.gram, rigorous());
  FullSolver full(*in.sys);
  std::mt19937_64 rng(19);
  int trials = 0;
  for (double mu : {1.0, 10.0, 1e3, 1e5})
  {
    const Vector u = full.solve(mu);
    for (int t = 0; t < 5; ++t, ++trials)
    {
      const Vector v = perturbed(u, in.sys->dofs(), std::pow(10.0, -t), rng);
      const Estimate e = est.estimate(v, mu);
      const double err = est.norm(u - v);
      EXPECT_LE(err, e.delta * (1 + 1e-10));
      EXPECT_LE(err, e.delta_loc * (1 + 1e-10));
      const double gamma = est.constants().gamma_ub(mu);
      EXPECT_LE(e.residual_norm, gamma * err * (1 + 1e-10));
      if (e.delta_rel)
        EXPECT_LE(err / est.norm(u), *e.delta_rel * (1 + 1e-10));
    }
  }
  EXPECT_EQ(trials, 20);
}

TEST(Estimator, LocalIndicatorsSatisfyOverlapInequality)
{
  Instance in(16, 4, stripes());
  Estimator est(*in.sys, *in.dec, in.gram);
  std::mt19937_64 rng(23);
  for (int t = 0; t < 10; ++t)
  {
    const Vector r = est.residual(perturbed(in.sys->shift(), in.sys->dofs(), 1.0, rng), 1e2);
    const double total = est.dual_norm(r);
    double sum = 0.0;
    for (double v : est.indicators(r))
    {
      EXPECT_LE(v, total * (1 + 1e-10));
      sum += v * v;
    }
    EXPECT_LE(sum, est.constants().J * total * total * (1 + 1e-10));
  }
}

TEST(Estimator, PartitionBoundControlsGlobalDualNorm)
{
  Instance in(16, 4, stripes());
  Estimator est(*in.sys, *in.dec, in.gram);
  const double c = pu_stability_bound(*in.mesh, in.sys->dofs(), *in.dec, in.gram);
  EXPECT_GT(c, 1.0);
  std::mt19937_64 rng(29);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t)
  {
    Vector f(in.mesh->num_nodes());
    for (Index k = 0; k < f.size(); ++k)
      f[k] = g(rng);
    for (Index k : in.sys->dofs().dirichlet_dofs)
      f[k] = 0.0;
    double sum = 0.0;
    for (double v : est.indicators(f))
      sum += v * v;
    const double ratio = est.dual_norm(f) / std::sqrt(sum);
    EXPECT_LE(ratio, c * (1 + 1e-10));
    worst = std::max(worst, ratio);
  }
  EXPECT_GT(worst, 0.5);
}

TEST(Estimator, PartitionBoundScalesWithInverseDomainSize)
{
  Instance coarse(16, 4, stripes()), fine(16, 8, stripes());
  const double c4 = pu_stability_bound(*coarse.mesh, coarse.sys->dofs(), *coarse.dec, coarse.gram);
  const double c8 = pu_stability_bound(*fine.mesh, fine.sys->dofs(), *fine.dec, fine.gram);
  EXPECT_GT(c8, 1.5 * c4);
  EXPECT_LT(c8, 2.5 * c4);
}

TEST(Estimator, IndicatorVanishesOutsideSupport)
{
  Instance in(16, 4, stripes());
  Estimator est(*in.sys, *in.dec, in.gram);
  const auto &verts = in.dec->vertices();
  // Functional supported on the own dofs of the first vertex space only.
  Vector r = Vector::Zero(in.mesh->num_nodes());
  for (Index k : in.dec->space(verts.front()).dofs)
    r[k] = 1.0;
  const auto ind = est.indicators(r);
  EXPECT_GT(ind.front(), 0.0);
  const IndexList &fp0 = in.dec->space(verts.front()).footprint;
  for (std::size_t p = 1; p < verts.size(); ++p)
  {
    const IndexList &fp = in.dec->space(verts[p]).footprint;
    bool overlaps = false;
    for (Index k : in.dec->space(verts.front()).dofs)
      overlaps = overlaps || std::binary_search(fp.begin(), fp.end(), k);
    if (!overlaps)
      EXPECT_EQ(ind[p], 0.0) << p;
  }
  EXPECT_FALSE(fp0.empty());
}

TEST(Estimator, RejectsMismatchedField)
{
  Instance in(8, 2);
  Estimator est(*in.sys, *in.dec, in.gram);
  EXPECT_THROW(est.residual(Vector::Zero(3), 1.0), InvalidArgument);
  EXPECT_THROW(est.residual(in.sys->shift(), 0.0), InvalidArgument);
}
