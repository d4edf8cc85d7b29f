// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <gtest/gtest.h>

#include "arbilomod/training.hpp"
#include "instance.hpp"

using namespace arbilomod;
using namespace arbilomod::testing;

namespace
{

// Span oracle: Cholesky factor of the Gram, then Householder QR with column pivoting.
Matrix pivoted_span(const Matrix &z, const Matrix &g, double threshold)
{
  const Eigen::LLT<Matrix> llt(g);
  const Matrix lt = llt.matrixU();
  Eigen::ColPivHouseholderQR<Matrix> qr(lt * z);
  qr.setThreshold(threshold);
  qr.compute(lt * z);
  const Matrix q = qr.householderQ();
  return q.leftCols(qr.rank());
}

// Sine of the largest principal angle between span(b) (Gram-orthonormal) and span(q)
// (Euclidean-orthonormal in Cholesky coordinates).
double max_angle_sine(const Matrix &b, const Matrix &q, const Matrix &g)
{
  const Eigen::LLT<Matrix> llt(g);
  const Matrix y = Matrix(llt.matrixU()) * b;
  const Matrix rest = y - q * (q.transpose() * y);
  return Eigen::JacobiSVD<Matrix>(rest).singularValues()(0);
}

}  // namespace

TEST(SnapshotGreedy, SmallSnapshotsGiveEmptyBasis)
{
  Instance in(4, 2);
  const Index n = in.mesh->num_nodes();
  std::mt19937_64 rng(1);
  const Matrix z = 1e-6 * random_matrix(n, 5, rng);
  EXPECT_EQ(snapshot_greedy(z, in.gram, 1.0).cols(), 0);
  EXPECT_EQ(snapshot_greedy(Matrix(n, 0), in.gram, 1.0).cols(), 0);
}

TEST(SnapshotGreedy, SingleSnapshotIsNormalized)
{
  Instance in(4, 2);
  const Index n = in.mesh->num_nodes();
  std::mt19937_64 rng(2);
  const Matrix z = random_matrix(n, 1, rng);
  const Matrix b = snapshot_greedy(z, in.gram, 1e-8);
  ASSERT_EQ(b.cols(), 1);
  const double nrm = std::sqrt(z.col(0).dot(in.gram * z.col(0)));
  EXPECT_LT((b.col(0) - z.col(0) / nrm).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SnapshotGreedy, SpanMatchesPivotedOrthogonalization)
{
  Instance in(4, 2);
  const Index n = in.mesh->num_nodes();
  const Matrix g(in.gram);
  std::mt19937_64 rng(3);
  // Ten snapshots of rank six.
  Matrix z(n, 10);
  z.leftCols(6) = random_matrix(n, 6, rng);
  z.rightCols(4) = z.leftCols(6) * random_matrix(6, 4, rng);
  const Matrix b = snapshot_greedy(z, in.gram, 1e-8);
  ASSERT_EQ(b.cols(), 6);
  EXPECT_LT(orthonormality_defect(b, g), 1e-12);
  const Matrix q = pivoted_span(z, g, 1e-10);
  ASSERT_EQ(q.cols(), 6);
  EXPECT_LT(max_angle_sine(b, q, g), 1e-8);

  const Matrix full = snapshot_greedy(random_matrix(n, 10, rng), in.gram, 1e-8);
  EXPECT_EQ(full.cols(), 10);
}

TEST(SnapshotGreedy, ResidualsBelowToleranceAndLargestFirst)
{
  Instance in(8, 2);
  const Index n = in.mesh->num_nodes();
  const Matrix g(in.gram);
  std::mt19937_64 rng(4);
  Matrix z = random_matrix(n, 40, rng);
  for (Index k = 0; k < z.cols(); ++k)
    z.col(k) *= std::pow(0.7, static_cast<double>(k));
  const double eps = 1e-3;
  const Matrix b = snapshot_greedy(z, in.gram, eps);
  EXPECT_GT(b.cols(), 0);
  EXPECT_LT(b.cols(), 40);
  EXPECT_LT(orthonormality_defect(b, g), 1e-10);
  for (Index k = 0; k < z.cols(); ++k)
  {
    const Vector r = z.col(k) - b * (b.transpose() * g * z.col(k));
    EXPECT_LE(std::sqrt(r.dot(g * r)), eps * (1 + 1e-12));
  }
  // The first basis vector is the normalized snapshot of largest norm.
  Index arg = 0;
  double best = 0.0;
  for (Index k = 0; k < z.cols(); ++k)
  {
    const double nrm = std::sqrt(z.col(k).dot(g * z.col(k)));
    if (nrm > best)
    {
      best = nrm;
      arg = k;
    }
  }
  EXPECT_LT((b.col(0) - z.col(arg) / best).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RandomSample, RangeDeterminismAndMean)
{
  Instance in(16, 4);
  const int face = in.dec->find({5, 6});
  ASSERT_GE(face, 0);
  const Vector a = random_coupling_sample(*in.dec, face, 7, 3);
  const Vector b = random_coupling_sample(*in.dec, face, 7, 3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), static_cast<Index>(in.dec->coupling_dofs(face).size()));
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
  EXPECT_NE(a, random_coupling_sample(*in.dec, face, 8, 3));
  EXPECT_NE(a, random_coupling_sample(*in.dec, face, 7, 4));

  Vector mean = Vector::Zero(a.size());
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
  {
    const Vector r = random_coupling_sample(*in.dec, face, 11, i);
    EXPECT_LE(r.cwiseAbs().maxCoeff(), 1.0);
    mean += r;
  }
  mean /= draws;
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.05);
}

TEST(RandomSample, UniformMoments)
{
  double sum = 0.0, sq = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
  {
    const double v = counter_uniform(5, {static_cast<std::uint64_t>(i)});
    ASSERT_GE(v, -1.0);
    ASSERT_LT(v, 1.0);
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / draws, 0.0, 0.01);
  EXPECT_NEAR(sq / draws, 1.0 / 3.0, 0.01);
}

TEST(FaceTraining, OrthonormalBoundedAndDeterministic)
{
  Instance in(16, 4, stripes());
  TrainingConfig cfg;
  cfg.samples = 12;
  for (int face : {in.dec->find({5, 6}), in.dec->find({1, 5}), in.dec->find({0, 1})})
  {
    ASSERT_GE(face, 0);
    const LocalBasis b = train_face(face, cfg, *in.sys, *in.dec, *in.ext, in.gram);
    EXPECT_EQ(b.space, face);
    EXPECT_GT(b.size(), 0);
    EXPECT_LE(b.size(), static_cast<int>(cfg.xi.size()) * (cfg.samples + 1));
    EXPECT_EQ(b.vectors.rows(), static_cast<Index>(in.dec->space(face).footprint.size()));
    EXPECT_LT(orthonormality_defect(b.vectors, dense_gram(in.gram, in.dec->space(face).footprint)),
              1e-8);
    const LocalBasis again = train_face(face, cfg, *in.sys, *in.dec, *in.ext, in.gram);
    EXPECT_EQ(b.vectors, again.vectors);
  }
}

TEST(FaceTraining, BasisFunctionsLieInTheExtendedSpace)
{
  Instance in(16, 4, stripes());
  TrainingConfig cfg;
  cfg.samples = 6;
  const int face = in.dec->find({5, 6});
  const LocalBasis b = train_face(face, cfg, *in.sys, *in.dec, *in.ext, in.gram);
  const Space &sp = in.dec->space(face);
  for (Index k = 0; k < b.vectors.cols(); ++k)
  {
    const Vector g = footprint_to_global(sp, b.vectors.col(k), in.mesh->num_nodes());
    const auto parts = in.ext->project(g);
    for (int s = 0; s < in.dec->num_spaces(); ++s)
    {
      if (s == face)
        EXPECT_LT((parts[s] - b.vectors.col(k)).cwiseAbs().maxCoeff(), 1e-10);
      else
        EXPECT_LT(parts[s].cwiseAbs().maxCoeff(), 1e-10) << s;
    }
  }
}

TEST(FaceTraining, EmptyDataGivesEmptyBasis)
{
  // Laplace with a linear shift has a vanishing source on the free dofs.
  Instance in(16, 4);
  TrainingConfig cfg;
  cfg.samples = 0;
  const int face = in.dec->find({5, 6});
  EXPECT_EQ(train_face(face, cfg, *in.sys, *in.dec, *in.ext, in.gram).size(), 0);
  cfg.samples = 4;
  cfg.include_source = false;
  EXPECT_GT(train_face(face, cfg, *in.sys, *in.dec, *in.ext, in.gram).size(), 0);
}

TEST(FaceTraining, UnaffectedByGeometryOutsideNeighbourhood)
{
  GeometryModel far = stripes();
  far.rectangles.push_back(Rect::from_unit(0.875, 0.875, 1.0, 1.0));
  Instance a(16, 4, stripes()), b(16, 4, far);
  const int face = a.dec->find({5, 6});
  TrainingConfig cfg;
  cfg.samples = 10;
  const auto ba = train_face(face, cfg, *a.sys, *a.dec, *a.ext, a.gram);
  const auto bb = train_face(face, cfg, *b.sys, *b.dec, *b.ext, b.gram);
  EXPECT_EQ(ba.vectors, bb.vectors);

  // A change inside the neighbourhood does alter the result.
  GeometryModel near = stripes();
  near.rectangles.push_back(Rect::from_unit(0.25, 0.0, 0.375, 0.125));
  Instance c(16, 4, near);
  const auto bc = train_face(face, cfg, *c.sys, *c.dec, *c.ext, c.gram);
  EXPECT_FALSE(bc.vectors.rows() == ba.vectors.rows() && bc.vectors.cols() == ba.vectors.cols() &&
               bc.vectors == ba.vectors);
}

TEST(FaceTraining, RejectsNonFaceSpaces)
{
  Instance in(16, 4);
  TrainingConfig cfg;
  EXPECT_THROW(train_face(in.dec->cells()[0], cfg, *in.sys, *in.dec, *in.ext, in.gram),
               InvalidArgument);
  cfg.eps_train = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(VertexBasis, NormalizedExtension)
{
  Instance in(16, 4, stripes());
  for (int v : in.dec->vertices())
  {
    const auto b = vertex_basis(v, *in.dec, *in.ext, in.gram);
    ASSERT_EQ(b.size(), 1);
    EXPECT_LT(orthonormality_defect(b.vectors, dense_gram(in.gram, in.dec->space(v).footprint)),
              1e-12);
  }
}
