// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/training.hpp"

#include <algorithm>
#include <cmath>

namespace arbilomod
{

namespace
{

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<double> default_training_set()
{
  return {1.0e0, 1.0e1, 1.0e2, 1.0e3, 1.0e4, 1.0e5};
}

void TrainingConfig::validate() const
{
  if (samples < 0)
    throw InvalidArgument("number of training samples must be nonnegative");
  if (!(eps_train > 0.0))
    throw InvalidArgument("training tolerance must be positive");
  if (xi.empty())
    throw InvalidArgument("parameter training set is empty");
}

Matrix snapshot_greedy(const Matrix &snapshots, const SparseMatrix &gram, double eps)
{
  const Index n = snapshots.rows();
  if (gram.rows() != n || gram.cols() != n)
    throw InvalidArgument("Gram matrix does not match the snapshot length");
  if (!snapshots.allFinite())
    throw InvalidArgument("snapshots contain non-finite values");
  Matrix z = snapshots;
  Matrix gz = gram * z;
  std::vector<Vector> basis, gbasis;
  const Index cap = std::min(n, static_cast<Index>(z.cols()));
  while (static_cast<Index>(basis.size()) < cap)
  {
    Index best = -1;
    double best_norm = eps;
    for (Index k = 0; k < z.cols(); ++k)
    {
      const double nrm = std::sqrt(std::max(0.0, z.col(k).dot(gz.col(k))));
      if (nrm > best_norm)
      {
        best_norm = nrm;
        best = k;
      }
    }
    if (best < 0)
      break;
    Vector v = z.col(best);
    // Second Gram-Schmidt pass against the current basis.
    for (std::size_t b = 0; b < basis.size(); ++b)
      v -= basis[b] * gbasis[b].dot(v);
    Vector gv = gram * v;
    const double nrm = std::sqrt(std::max(0.0, v.dot(gv)));
    if (!(nrm > 0.0))
      break;
    v /= nrm;
    gv /= nrm;
    const Eigen::RowVectorXd coeff = gv.transpose() * z;
    z.noalias() -= v * coeff;
    gz.noalias() -= gv * coeff;
    z.col(best).setZero();
    gz.col(best).setZero();
    basis.push_back(std::move(v));
    gbasis.push_back(std::move(gv));
  }
  Matrix out(n, static_cast<Index>(basis.size()));
  for (std::size_t b = 0; b < basis.size(); ++b)
    out.col(static_cast<Index>(b)) = basis[b];
  return out;
}

double counter_uniform(std::uint64_t seed, const std::vector<std::uint64_t> &key)
{
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : key)
    h = splitmix64(h ^ k);
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

Vector random_coupling_sample(const Decomposition &dec, int s, std::uint64_t seed, int i)
{
  const IndexList coupling = dec.coupling_dofs(s);
  std::vector<std::uint64_t> key(dec.space(s).xi.begin(), dec.space(s).xi.end());
  key.push_back(static_cast<std::uint64_t>(i));
  key.push_back(0);
  Vector r(static_cast<Index>(coupling.size()));
  for (Index k = 0; k < r.size(); ++k)
  {
    key.back() = static_cast<std::uint64_t>(k);
    r[k] = counter_uniform(seed, key);
  }
  return r;
}

SparseMatrix footprint_gram(const SparseMatrix &gram, const Space &sp)
{
  return restrict_matrix(gram, sp.footprint);
}

LocalBasis train_face(int s, const TrainingConfig &cfg, const AffineSystem &sys,
                      const Decomposition &dec, const ExtensionOperator &ext,
                      const SparseMatrix &gram)
{
  cfg.validate();
  const Space &sp = dec.space(s);
  if (sp.codim != Codim::face)
    throw InvalidArgument("training is defined for face spaces only");
  LocalBasis out;
  out.space = s;
  out.revision = sys.revision();
  if (sp.dofs.empty())
    return out;

  const IndexList train = dec.training_dofs(s);
  const IndexList coupling = dec.coupling_dofs(s);
  const SparseMatrix ah_tt = restrict_matrix(sys.a_high(), train);
  const SparseMatrix af_tt = restrict_matrix(sys.a_full(), train);
  const SparseMatrix ah_tc = restrict_matrix(sys.a_high(), train, coupling);
  const SparseMatrix af_tc = restrict_matrix(sys.a_full(), train, coupling);
  const Vector fh = restrict_vector(sys.f_high(), train);
  const Vector ff = restrict_vector(sys.f_full(), train);

  const int samples = coupling.empty() ? 0 : cfg.samples;
  Matrix random(static_cast<Index>(coupling.size()), samples);
  for (int i = 0; i < samples; ++i)
    random.col(i) = random_coupling_sample(dec, s, cfg.seed, i);

  // Row of each training dof, to read snapshot values at arbitrary nodes.
  std::vector<Index> row_of(static_cast<std::size_t>(sys.mesh().num_nodes()), -1);
  for (std::size_t k = 0; k < train.size(); ++k)
    row_of[train[k]] = static_cast<Index>(k);

  const Index per_mu = samples + (cfg.include_source ? 1 : 0);
  const Index nfp = static_cast<Index>(sp.footprint.size());
  Matrix snapshots(nfp, per_mu * static_cast<Index>(cfg.xi.size()));
  SparseSpdSolver solver;
  for (std::size_t q = 0; q < cfg.xi.size(); ++q)
  {
    if (per_mu == 0)
      break;
    const double mu = cfg.xi[q];
    const SparseMatrix a = mu * ah_tt + af_tt;
    try
    {
      solver.factorize(a);
    }
    catch (const LinearSolverError &e)
    {
      throw TrainingError(std::string("training solve failed: ") + e.what(), s);
    }
    Matrix rhs(static_cast<Index>(train.size()), per_mu);
    Index col = 0;
    if (cfg.include_source)
      rhs.col(col++) = mu * fh + ff;
    if (samples > 0)
      rhs.rightCols(samples) = -(mu * (ah_tc * random) + af_tc * random);
    const Matrix x = solver.solve(rhs);
    if (!x.allFinite())
      throw TrainingError("training solve produced non-finite values", s);
    const Matrix part = ext.project_part(s, [&](const IndexList &nodes) {
      Matrix v = Matrix::Zero(static_cast<Index>(nodes.size()), per_mu);
      for (std::size_t k = 0; k < nodes.size(); ++k)
      {
        const Index r = row_of[nodes[k]];
        if (r >= 0)
          v.row(static_cast<Index>(k)) = x.row(r);
      }
      return v;
    });
    snapshots.middleCols(static_cast<Index>(q) * per_mu, per_mu) = part;
  }
  out.vectors = snapshot_greedy(snapshots, footprint_gram(gram, sp), cfg.eps_train);
  return out;
}

LocalBasis vertex_basis(int s, const Decomposition &dec, const ExtensionOperator &ext,
                        const SparseMatrix &gram)
{
  const Space &sp = dec.space(s);
  LocalBasis out;
  out.space = s;
  Matrix one = Matrix::Ones(static_cast<Index>(sp.dofs.size()), 1);
  Matrix v = ext.extend(s, one);
  const double nrm = std::sqrt(v.col(0).dot(footprint_gram(gram, sp) * v.col(0)));
  out.vectors = v / nrm;
  return out;
}

}  // namespace arbilomod
