// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/estimator.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "arbilomod/cell_greedy.hpp"

namespace arbilomod
{

EstimatorConstants::EstimatorConstants()
  : alpha_lb(alpha_lb_default), gamma_ub([](double mu) { return 1.0 + mu; })
{
}

std::optional<double> relative_bound(double delta, double norm)
{
  if (!(norm > delta))
    return std::nullopt;
  return delta / (norm - delta);
}

namespace
{

// Clamped hat of coarse point k among the sorted coarse points `pts`, at position t.
double clamped_hat(const std::vector<int> &pts, std::size_t k, double t)
{
  if (k > 0 && t < pts[k])
    return std::max(0.0, 1.0 - (pts[k] - t) / (pts[k] - pts[k - 1]));
  if (k + 1 < pts.size() && t > pts[k])
    return std::max(0.0, 1.0 - (t - pts[k]) / (pts[k + 1] - pts[k]));
  return 1.0;
}

}  // namespace

double pu_stability_bound(const Mesh &mesh, const DofHandler &dofs, const Decomposition &dec,
                          const SparseMatrix &gram)
{
  const auto &verts = dec.vertices();
  if (verts.empty())
    throw InvalidArgument("partition bound needs at least one vertex space");
  std::vector<int> xs, ys;
  for (int s : verts)
  {
    xs.push_back(dec.space(s).box[0]);
    ys.push_back(dec.space(s).box[2]);
  }
  for (auto *v : {&xs, &ys})
  {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  if (xs.size() * ys.size() != verts.size())
    throw InvalidArgument("vertex spaces do not form a tensor grid");

  const Index m = static_cast<Index>(dofs.free_dofs.size());
  Matrix g = Matrix::Zero(m, m);
  for (int k = 0; k < gram.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(gram, k); it; ++it)
    {
      const Index r = dofs.free_index[it.row()], c = dofs.free_index[it.col()];
      if (r >= 0 && c >= 0)
        g(r, c) = it.value();
    }

  Matrix sum = Matrix::Zero(m, m);
  Vector total = Vector::Zero(m);
  for (int s : verts)
  {
    const auto kx = std::lower_bound(xs.begin(), xs.end(), dec.space(s).box[0]) - xs.begin();
    const auto ky = std::lower_bound(ys.begin(), ys.end(), dec.space(s).box[2]) - ys.begin();
    Vector p(m);
    for (Index f = 0; f < m; ++f)
    {
      const auto &x = mesh.nodes[dofs.free_dofs[f]];
      p[f] = clamped_hat(xs, kx, x[0] * mesh.n) * clamped_hat(ys, ky, x[1] * mesh.n);
    }
    std::vector<char> inside(m, 0);
    for (Index node : dec.overlapping_dofs(s))
      inside[dofs.free_index[node]] = 1;
    for (Index f = 0; f < m; ++f)
      if (p[f] > 0.0 && !inside[f])
        throw InvalidArgument("partition function leaves its patch");
    total += p;
    sum.noalias() += p.asDiagonal() * g * p.asDiagonal();
  }
  if ((total.array() - 1.0).abs().maxCoeff() > 1e-12)
    throw InvalidArgument("coarse hats do not sum to one on the free dofs");

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(sum, g, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success)
    throw ConditioningError("partition bound eigenproblem failed");
  return std::sqrt(eig.eigenvalues().maxCoeff());
}

Estimator::Estimator(const AffineSystem &sys, const Decomposition &dec, const SparseMatrix &gram,
                     EstimatorConstants consts, int threads)
  : sys_(sys), dec_(dec), gram_(gram), consts_(std::move(consts)), threads_(threads),
    global_(gram, sys.dofs().free_dofs)
{
  const auto &verts = dec.vertices();
  patches_.resize(verts.size());
  parallel_for(verts.size(), threads, [&](std::size_t i) {
    patches_[i] = RieszSolver(gram, dec.overlapping_dofs(verts[i]));
  });
}

Vector Estimator::residual(const Vector &u, double mu) const
{
  sys_.geometry().check_parameter(mu);
  if (u.size() != sys_.mesh().num_nodes())
    throw InvalidArgument("field does not match the mesh");
  Vector r = sys_.rhs(mu) - (mu * (sys_.a_high() * (u - sys_.shift())) +
                             sys_.a_full() * (u - sys_.shift()));
  for (Index k : sys_.dofs().dirichlet_dofs)
    r[k] = 0.0;
  return r;
}

double Estimator::dual_norm(const Vector &functional) const
{
  return global_.dual_norm(functional);
}

std::vector<double> Estimator::indicators(const Vector &functional) const
{
  std::vector<double> out(patches_.size());
  parallel_for(patches_.size(), threads_,
               [&](std::size_t i) { out[i] = patches_[i].dual_norm(functional); });
  return out;
}

double Estimator::norm(const Vector &u) const
{
  return std::sqrt(std::max(0.0, u.dot(gram_ * u)));
}

double Estimator::free_norm(const Vector &u) const
{
  Vector v = u;
  for (Index k : sys_.dofs().dirichlet_dofs)
    v[k] = 0.0;
  return norm(v);
}

Estimate Estimator::estimate(const Vector &u, double mu) const
{
  Estimate e;
  e.mu = mu;
  const Vector r = residual(u, mu);
  const double alpha = consts_.alpha_lb(mu);
  e.residual_norm = dual_norm(r);
  e.delta = e.residual_norm / alpha;
  e.indicators = indicators(r);
  double sum = 0.0;
  for (double v : e.indicators)
    sum += v * v;
  e.delta_loc = consts_.c_pu * std::sqrt(sum) / alpha;
  e.norm = norm(u);
  e.delta_rel = relative_bound(e.delta, e.norm);
  e.delta_rel_loc = relative_bound(e.delta_loc, e.norm);
  return e;
}

}  // namespace arbilomod
