// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <Eigen/Cholesky>
#include <gtest/gtest.h>

#include "arbilomod/estimator.hpp"
#include "arbilomod/reduced.hpp"
#include "instance.hpp"

using namespace arbilomod;
using namespace arbilomod::testing;

namespace
{

// Unit vectors on the own dofs of every space: together they span the free dofs.
void fill_nodal(ReducedModel &rm, const Decomposition &dec, int revision)
{
  for (int s = 0; s < dec.num_spaces(); ++s)
  {
    const Space &sp = dec.space(s);
    const IndexList &pos = sp.positions.at(s);
    Matrix b = Matrix::Zero(static_cast<Index>(sp.footprint.size()),
                            static_cast<Index>(pos.size()));
    for (std::size_t k = 0; k < pos.size(); ++k)
      b(pos[k], static_cast<Index>(k)) = 1.0;
    rm.set_basis(s, b, revision);
  }
}

Vector global_column(const Decomposition &dec, int s, const Vector &local, Index nodes)
{
  Vector g = Vector::Zero(nodes);
  const IndexList &fp = dec.space(s).footprint;
  for (std::size_t k = 0; k < fp.size(); ++k)
    g[fp[k]] = local[static_cast<Index>(k)];
  return g;
}

}  // namespace

TEST(ReducedModel, EmptySpaceReturnsShift)
{
  Instance in(8, 2, stripes());
  ReducedModel rm(*in.sys, *in.dec);
  rm.assemble();
  EXPECT_EQ(rm.dim(), 0);
  const ReducedSolution s = rm.solve(10.0);
  EXPECT_EQ(s.coefficients.size(), 0);
  EXPECT_LT((s.field - in.sys->shift()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ReducedModel, SingleVectorMatchesScalarGalerkin)
{
  Instance in(8, 2, stripes());
  ReducedModel rm(*in.sys, *in.dec);
  const int v = in.dec->vertices().front();
  std::mt19937_64 rng(3);
  const Index m = static_cast<Index>(in.dec->space(v).footprint.size());
  const Vector local = random_matrix(m, 1, rng).col(0);
  rm.set_basis(v, local, 0);
  rm.assemble();
  ASSERT_EQ(rm.dim(), 1);
  const Vector phi = global_column(*in.dec, v, local, in.mesh->num_nodes());
  for (double mu : {1.0, 1e3})
  {
    const SparseMatrix a = in.sys->operator_at(mu);
    const double expected = phi.dot(in.sys->rhs(mu)) / phi.dot(a * phi);
    EXPECT_NEAR(rm.solve_coefficients(mu)[0], expected, 1e-12 * std::abs(expected));
  }
}

TEST(ReducedModel, ReproducesFullSolutionWhenSpanIsComplete)
{
  Instance in(8, 2, stripes());
  ReducedModel rm(*in.sys, *in.dec);
  fill_nodal(rm, *in.dec, 0);
  rm.assemble();
  EXPECT_EQ(rm.dim(), static_cast<Index>(in.sys->dofs().free_dofs.size()));
  FullSolver full(*in.sys);
  for (double mu : {1.0, 1e2, 1e5})
  {
    const Vector u = full.solve(mu);
    const Vector ur = rm.solve(mu).field;
    EXPECT_LT((u - ur).cwiseAbs().maxCoeff(), 1e-8 * u.cwiseAbs().maxCoeff()) << mu;
  }
}

TEST(ReducedModel, ResidualIsOrthogonalToReducedSpace)
{
  Instance in(16, 4, stripes());
  ReducedModel rm(*in.sys, *in.dec);
  std::mt19937_64 rng(11);
  for (int s = 0; s < in.dec->num_spaces(); ++s)
  {
    const Index m = static_cast<Index>(in.dec->space(s).footprint.size());
    rm.set_basis(s, random_matrix(m, std::min<Index>(2, m), rng), 0);
  }
  rm.assemble();
  Estimator est(*in.sys, *in.dec, in.gram);
  for (double mu : {1.0, 1e4})
  {
    const ReducedSolution sol = rm.solve(mu);
    const Vector r = est.residual(sol.field, mu);
    const double scale = in.sys->rhs(mu).cwiseAbs().maxCoeff();
    for (int s = 0; s < in.dec->num_spaces(); ++s)
    {
      const Vector rl = restrict_vector(r, in.dec->space(s).footprint);
      EXPECT_LT((rm.basis(s).transpose() * rl).cwiseAbs().maxCoeff(), 1e-9 * scale);
    }
  }
}

TEST(ReducedModel, IncrementalAssemblyMatchesFresh)
{
  Instance in(16, 4, stripes());
  std::mt19937_64 rng(5);
  ReducedModel rm(*in.sys, *in.dec);
  for (int s = 0; s < in.dec->num_spaces(); ++s)
  {
    const Index m = static_cast<Index>(in.dec->space(s).footprint.size());
    rm.set_basis(s, random_matrix(m, 1, rng), 0);
  }
  rm.assemble();
  const int f = in.dec->faces()[3];
  const Index m = static_cast<Index>(in.dec->space(f).footprint.size());
  rm.append(f, random_matrix(m, 1, rng).col(0));
  EXPECT_FALSE(rm.assembled());
  rm.assemble();
  std::vector<int> touched(in.dec->space(f).xi.begin(), in.dec->space(f).xi.end());
  std::vector<int> recomputed = rm.recomputed();
  std::sort(recomputed.begin(), recomputed.end());
  EXPECT_EQ(recomputed, touched);

  ReducedModel fresh(*in.sys, *in.dec);
  for (int s = 0; s < in.dec->num_spaces(); ++s)
    fresh.set_basis(s, rm.basis(s), 0);
  fresh.assemble();
  ASSERT_EQ(fresh.dim(), rm.dim());
  EXPECT_LT((fresh.a_high() - rm.a_high()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((fresh.a_full() - rm.a_full()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((fresh.f_high() - rm.f_high()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((fresh.f_full() - rm.f_full()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ReducedModel, StaleBasisIsRejected)
{
  Instance in(8, 2, stripes());
  ReducedModel rm(*in.sys, *in.dec);
  const int v = in.dec->vertices().front();
  rm.set_basis(v, Matrix::Ones(static_cast<Index>(in.dec->space(v).footprint.size()), 1), 0);
  GeometryModel g = stripes();
  g.rectangles.push_back(Rect::from_unit(0.5, 0.75, 0.625, 0.875));
  in.sys->update_geometry(g, domains_touching(g.rectangles.back(), 2));
  EXPECT_THROW(rm.assemble(), StalenessError);
  rm.retag(in.sys->revision());
  EXPECT_NO_THROW(rm.assemble());
}

TEST(ReducedModel, DependentColumnsRaiseConditioningError)
{
  Instance in(8, 2, stripes());
  ReducedModel rm(*in.sys, *in.dec);
  const int v = in.dec->vertices().front();
  const Index m = static_cast<Index>(in.dec->space(v).footprint.size());
  Matrix b(m, 2);
  b.col(0).setOnes();
  b.col(1).setOnes();
  rm.set_basis(v, b, 0);
  rm.assemble();
  EXPECT_THROW(rm.solve(1.0), ConditioningError);
}

TEST(ReducedModel, ParameterOutsideRangeIsRejected)
{
  Instance in(8, 2, stripes());
  ReducedModel rm(*in.sys, *in.dec);
  rm.assemble();
  EXPECT_THROW(rm.solve(0.5), InvalidArgument);
  EXPECT_THROW(rm.solve(2e5), InvalidArgument);
}
