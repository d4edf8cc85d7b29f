// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/reduced.hpp"

#include <Eigen/Cholesky>

namespace arbilomod
{

ReducedModel::ReducedModel(const AffineSystem &sys, const Decomposition &dec)
  : sys_(sys), dec_(dec)
{
  const int ns = dec.num_spaces();
  bases_.resize(ns);
  for (int s = 0; s < ns; ++s)
    bases_[s].resize(static_cast<Index>(dec.space(s).footprint.size()), 0);
  revisions_.assign(ns, sys.revision());
  versions_.assign(ns, 0);
  offsets_.assign(ns, 0);
  blocks_.resize(dec.grid().count());
}

void ReducedModel::set_basis(int s, Matrix vectors, int revision)
{
  if (vectors.rows() != static_cast<Index>(dec_.space(s).footprint.size()))
    throw InvalidArgument("basis does not match the footprint of the space");
  bases_[s] = std::move(vectors);
  revisions_[s] = revision;
  versions_[s] = next_version_++;
  assembled_ = false;
}

void ReducedModel::append(int s, const Vector &v)
{
  if (v.size() != bases_[s].rows())
    throw InvalidArgument("basis vector does not match the footprint of the space");
  const Index k = bases_[s].cols();
  bases_[s].conservativeResize(Eigen::NoChange, k + 1);
  bases_[s].col(k) = v;
  versions_[s] = next_version_++;
  assembled_ = false;
}

void ReducedModel::clear_basis(int s)
{
  set_basis(s, Matrix(bases_[s].rows(), 0), sys_.revision());
}

void ReducedModel::retag(int revision)
{
  for (int &r : revisions_)
    r = revision;
}

std::vector<std::pair<int, std::uint64_t>> ReducedModel::members_of(int d) const
{
  std::vector<std::pair<int, std::uint64_t>> out;
  for (int s : dec_.spaces_of_domain(d))
    if (bases_[s].cols() > 0)
      out.emplace_back(s, versions_[s]);
  return out;
}

void ReducedModel::build_block(int d)
{
  DomainBlock &blk = blocks_[d];
  const DomainOperator &op = sys_.domain(d);
  blk.members = members_of(d);
  blk.key = op.key;
  Index k = 0;
  for (auto &[s, v] : blk.members)
    k += bases_[s].cols();
  const Index nd = static_cast<Index>(op.nodes.size());
  Matrix w = Matrix::Zero(nd, k);
  Index col = 0;
  for (auto &[s, v] : blk.members)
  {
    const Matrix &b = bases_[s];
    const IndexList &local = dec_.footprint_in_domain(s, d);
    const IndexList &fp = dec_.domain_in_footprint(s, d);
    for (std::size_t r = 0; r < local.size(); ++r)
      w.block(local[r], col, 1, b.cols()) = b.row(fp[r]);
    col += b.cols();
  }
  Vector us(nd);
  for (Index r = 0; r < nd; ++r)
    us[r] = sys_.shift()[op.nodes[r]];
  const Matrix ahw = op.a_high * w;
  const Matrix afw = op.a_full * w;
  blk.a_high = w.transpose() * ahw;
  blk.a_full = w.transpose() * afw;
  blk.f_high = -(ahw.transpose() * us);
  blk.f_full = -(afw.transpose() * us);
  blk.valid = true;
}

void ReducedModel::assemble(int threads)
{
  for (int s = 0; s < dec_.num_spaces(); ++s)
    if (bases_[s].cols() > 0 && revisions_[s] != sys_.revision())
      throw StalenessError("basis of space " + std::to_string(s) + " has revision " +
                           std::to_string(revisions_[s]) + ", system has revision " +
                           std::to_string(sys_.revision()));
  recomputed_.clear();
  for (int d = 0; d < dec_.grid().count(); ++d)
  {
    const DomainBlock &blk = blocks_[d];
    if (!blk.valid || blk.key != sys_.domain(d).key || blk.members != members_of(d))
      recomputed_.push_back(d);
  }
  parallel_for(recomputed_.size(), threads, [&](std::size_t i) { build_block(recomputed_[i]); });

  dim_ = 0;
  for (int s = 0; s < dec_.num_spaces(); ++s)
  {
    offsets_[s] = dim_;
    dim_ += bases_[s].cols();
  }
  a_high_ = Matrix::Zero(dim_, dim_);
  a_full_ = Matrix::Zero(dim_, dim_);
  f_high_ = Vector::Zero(dim_);
  f_full_ = Vector::Zero(dim_);
  for (const DomainBlock &blk : blocks_)
  {
    Index ri = 0;
    for (auto &[sr, vr] : blk.members)
    {
      const Index kr = bases_[sr].cols();
      Index ci = 0;
      for (auto &[sc, vc] : blk.members)
      {
        const Index kc = bases_[sc].cols();
        a_high_.block(offsets_[sr], offsets_[sc], kr, kc) += blk.a_high.block(ri, ci, kr, kc);
        a_full_.block(offsets_[sr], offsets_[sc], kr, kc) += blk.a_full.block(ri, ci, kr, kc);
        ci += kc;
      }
      f_high_.segment(offsets_[sr], kr) += blk.f_high.segment(ri, kr);
      f_full_.segment(offsets_[sr], kr) += blk.f_full.segment(ri, kr);
      ri += kr;
    }
  }
  assembled_ = true;
}

Vector ReducedModel::solve_coefficients(double mu) const
{
  if (!assembled_)
    throw StalenessError("reduced model must be assembled before solving");
  sys_.geometry().check_parameter(mu);
  if (dim_ == 0)
    return Vector(0);
  const Matrix a = mu * a_high_ + a_full_;
  const Eigen::LLT<Matrix> llt(a);
  const double scale = a.diagonal().cwiseAbs().maxCoeff();
  if (llt.info() != Eigen::Success)
    throw ConditioningError("reduced system is not positive definite");
  const Vector piv = llt.matrixLLT().diagonal().cwiseAbs2();
  if (piv.minCoeff() < pivot_floor * scale)
    throw ConditioningError("reduced system is numerically singular (Cholesky pivot " +
                            std::to_string(piv.minCoeff() / scale) + " relative)");
  return llt.solve(Vector(mu * f_high_ + f_full_));
}

Vector ReducedModel::reconstruct(const Vector &c) const
{
  if (c.size() != dim_)
    throw InvalidArgument("coefficient vector does not match the reduced dimension");
  Vector u = sys_.shift();
  for (int s = 0; s < dec_.num_spaces(); ++s)
  {
    const Index k = bases_[s].cols();
    if (k == 0)
      continue;
    const Vector local = bases_[s] * c.segment(offsets_[s], k);
    const IndexList &fp = dec_.space(s).footprint;
    for (std::size_t r = 0; r < fp.size(); ++r)
      u[fp[r]] += local[static_cast<Index>(r)];
  }
  return u;
}

ReducedSolution ReducedModel::solve(double mu) const
{
  ReducedSolution out;
  out.mu = mu;
  out.coefficients = solve_coefficients(mu);
  out.field = reconstruct(out.coefficients);
  return out;
}

}  // namespace arbilomod
