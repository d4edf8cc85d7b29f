// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/cell_greedy.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

namespace arbilomod
{

double alpha_lb_default(double)
{
  const double cf2 = 1.0 / (2.0 * std::numbers::pi * std::numbers::pi);
  return 1.0 / (cf2 + 1.0);
}

double alpha_lb_rigorous(double)
{
  const double cf2 = 1.0 / (std::numbers::pi * std::numbers::pi);
  return 1.0 / (cf2 + 1.0);
}

void CellGreedyConfig::validate() const
{
  if (!(eps_greedy > 0.0))
    throw InvalidArgument("greedy tolerance must be positive");
  if (xi.empty())
    throw InvalidArgument("parameter training set is empty");
  if (!alpha_lb)
    throw InvalidArgument("missing coercivity bound");
  for (double mu : xi)
    if (!(alpha_lb(mu) > 0.0))
      throw InvalidArgument("coercivity bound must be positive");
}

CellProblem::CellProblem(int cell, const std::vector<Matrix> &bases, const AffineSystem &sys,
                         const Decomposition &dec, const SparseMatrix &gram)
  : cell_(cell)
{
  const Space &cs = dec.space(cell);
  if (cs.codim != Codim::cell)
    throw InvalidArgument("cell greedy needs a cell space");
  const int d = cs.xi[0];
  const DomainOperator &op = sys.domain(d);
  const IndexList &rows = dec.footprint_in_domain(cell, d);
  const Index nd = static_cast<Index>(op.nodes.size());

  // Coupling functions on the closed domain: reduced bases of every space meeting the cell,
  // followed by the shift.
  Index total = 1;
  const std::vector<int> coupling = dec.coupling_spaces(cell);
  for (int z : coupling)
    if (static_cast<std::size_t>(z) < bases.size())
      total += bases[z].cols();
  Matrix psi = Matrix::Zero(nd, total);
  Index col = 0;
  for (int z : coupling)
  {
    if (static_cast<std::size_t>(z) >= bases.size() || bases[z].cols() == 0)
      continue;
    const Matrix &b = bases[z];
    const IndexList &local = dec.footprint_in_domain(z, d);
    const IndexList &fp = dec.domain_in_footprint(z, d);
    for (std::size_t k = 0; k < local.size(); ++k)
      psi.block(local[k], col, 1, b.cols()) = b.row(fp[k]);
    col += b.cols();
  }
  for (Index k = 0; k < nd; ++k)
    psi(k, col) = sys.shift()[op.nodes[k]];

  IndexList all(static_cast<std::size_t>(nd));
  for (Index k = 0; k < nd; ++k)
    all[static_cast<std::size_t>(k)] = k;
  const SparseMatrix ah_rows = restrict_matrix(op.a_high, rows, all);
  const SparseMatrix af_rows = restrict_matrix(op.a_full, rows, all);
  g_high_ = -(ah_rows * psi);
  g_full_ = -(af_rows * psi);
  a_high_ = restrict_matrix(op.a_high, rows);
  a_full_ = restrict_matrix(op.a_full, rows);
  gc_ = restrict_matrix(gram, cs.dofs);
  riesz_.factorize(gc_);
  rg_high_ = riesz_.solve(g_high_);
  rg_full_ = riesz_.solve(g_full_);
}

Matrix CellProblem::truth(double mu) const
{
  SparseSpdSolver s(op(mu));
  return s.solve(rhs(mu));
}

Vector CellProblem::truth(double mu, Index j) const
{
  SparseSpdSolver s(op(mu));
  return s.solve(Vector(rhs(mu).col(j)));
}

Matrix CellProblem::reduced(const Matrix &basis, double mu) const
{
  if (basis.cols() == 0)
    return Matrix::Zero(dim(), num_rhs());
  const Matrix ab = op(mu) * basis;
  const Matrix ar = basis.transpose() * ab;
  const Matrix x = ar.llt().solve(basis.transpose() * rhs(mu));
  return basis * x;
}

Vector CellProblem::estimates(const Matrix &basis, double mu,
                              const std::function<double(double)> &alpha) const
{
  Matrix r = rhs(mu);
  Matrix z = mu * rg_high_ + rg_full_;
  if (basis.cols() > 0)
  {
    const Matrix ab = op(mu) * basis;
    const Matrix ar = basis.transpose() * ab;
    const Matrix x = ar.llt().solve(basis.transpose() * r);
    r.noalias() -= ab * x;
    z.noalias() -= riesz_.solve(ab) * x;
  }
  const double a = alpha(mu);
  Vector out(r.cols());
  for (Index j = 0; j < r.cols(); ++j)
    out[j] = std::sqrt(std::max(0.0, r.col(j).dot(z.col(j)))) / a;
  return out;
}

namespace
{

// Incrementally maintained reduced quantities of a growing Gram-orthonormal basis.
struct GreedyState
{
  const CellProblem &p;
  const SparseMatrix &a_high, &a_full, &gc;
  const Matrix &g_high, &g_full, &rg_high, &rg_full;
  Matrix basis, a1b, a0b, ra1b, ra0b;  // A_b C and G^{-1} A_b C
  Matrix ba1b, ba0b;                   // C^T A_b C
  Matrix bg1, bg0;                     // C^T g_b

  Index size() const { return basis.cols(); }

  // Appends a snapshot after two Gram-Schmidt passes; returns the norm of its complement
  // relative to its own norm.
  double append(Vector v, const std::function<Matrix(const Matrix &)> &riesz)
  {
    const double n0 = std::sqrt(std::max(0.0, v.dot(gc * v)));
    for (int pass = 0; pass < 2; ++pass)
      if (size() > 0)
        v -= basis * (basis.transpose() * (gc * v));
    const double n1 = std::sqrt(std::max(0.0, v.dot(gc * v)));
    if (!(n1 > 0.0) || !(n0 > 0.0))
      return 0.0;
    v /= n1;
    const Index k = size();
    auto grow = [&](Matrix &m, const Vector &col) {
      m.conservativeResize(col.size(), k + 1);
      m.col(k) = col;
    };
    grow(basis, v);
    const Vector v1 = a_high * v, v0 = a_full * v;
    grow(a1b, v1);
    grow(a0b, v0);
    Matrix both(v1.size(), 2);
    both << v1, v0;
    const Matrix rv = riesz(both);
    grow(ra1b, rv.col(0));
    grow(ra0b, rv.col(1));
    ba1b.conservativeResize(k + 1, k + 1);
    ba0b.conservativeResize(k + 1, k + 1);
    ba1b.row(k) = v1.transpose() * basis;
    ba1b.col(k) = ba1b.row(k).transpose();
    ba0b.row(k) = v0.transpose() * basis;
    ba0b.col(k) = ba0b.row(k).transpose();
    bg1.conservativeResize(k + 1, g_high.cols());
    bg0.conservativeResize(k + 1, g_full.cols());
    bg1.row(k) = v.transpose() * g_high;
    bg0.row(k) = v.transpose() * g_full;
    return n1 / n0;
  }

  Vector estimates(double mu, double alpha) const
  {
    Matrix r = mu * g_high + g_full;
    Matrix z = mu * rg_high + rg_full;
    if (size() > 0)
    {
      const Matrix ar = mu * ba1b + ba0b;
      Eigen::LLT<Matrix> llt(ar);
      if (llt.info() != Eigen::Success)
        throw ConditioningError("reduced cell system is not positive definite");
      const Matrix x = llt.solve(mu * bg1 + bg0);
      r.noalias() -= (mu * a1b + a0b) * x;
      z.noalias() -= (mu * ra1b + ra0b) * x;
    }
    Vector out(r.cols());
    for (Index j = 0; j < r.cols(); ++j)
      out[j] = std::sqrt(std::max(0.0, r.col(j).dot(z.col(j)))) / alpha;
    return out;
  }
};

}  // namespace

class CellGreedy
{
public:
  static CellGreedyResult run(const CellProblem &p, const CellGreedyConfig &cfg,
                              const Matrix *warm)
  {
    cfg.validate();
    GreedyState st{p,          p.a_high_,  p.a_full_,  p.gc_,      p.g_high_,
                   p.g_full_,  p.rg_high_, p.rg_full_, {},         {},
                   {},         {},         {},         {},         {},
                   {},         {}};
    const Index n = p.dim();
    st.basis.resize(n, 0);
    st.a1b.resize(n, 0);
    st.a0b.resize(n, 0);
    st.ra1b.resize(n, 0);
    st.ra0b.resize(n, 0);
    st.ba1b.resize(0, 0);
    st.ba0b.resize(0, 0);
    st.bg1.resize(0, p.num_rhs());
    st.bg0.resize(0, p.num_rhs());
    auto riesz = [&](const Matrix &f) { return p.riesz_.solve(f); };
    if (warm)
    {
      if (warm->rows() != n)
        throw InvalidArgument("warm start basis does not match the cell dimension");
      for (Index k = 0; k < warm->cols(); ++k)
        st.append(warm->col(k), riesz);
    }

    CellGreedyResult res;
    res.basis.space = p.cell();
    const std::size_t nmu = cfg.xi.size();
    std::vector<Vector> est(nmu);
    auto evaluate = [&] {
      double best = -1.0;
      std::size_t bq = 0;
      Index bj = 0;
      for (std::size_t q = 0; q < nmu; ++q)
      {
        est[q] = st.estimates(cfg.xi[q], cfg.alpha_lb(cfg.xi[q]));
        for (Index j = 0; j < est[q].size(); ++j)
          if (est[q][j] > best)
          {
            best = est[q][j];
            bq = q;
            bj = j;
          }
      }
      return std::make_tuple(best, bq, bj);
    };

    auto [best, bq, bj] = evaluate();
    while (best > cfg.eps_greedy && st.size() < n)
    {
      res.history.push_back(best);
      const double mu = cfg.xi[bq];
      const Vector u = p.truth(mu, bj);
      const double kept = st.append(u, riesz);
      if (kept < 1e-12)
        throw ConditioningError("cell greedy stagnated: snapshot already in the basis");
      ++res.iterations;
      const double before = best;
      std::tie(best, bq, bj) = [&] {
        const std::size_t pq = bq;
        const Index pj = bj;
        auto next = evaluate();
        if (!(est[pq][pj] < before * (1.0 - 1e-12)))
          throw ConditioningError("cell greedy stagnated: selected estimate did not decrease");
        return next;
      }();
    }
    res.history.push_back(std::max(best, 0.0));
    res.max_estimate = std::max(best, 0.0);
    res.basis.vectors = st.basis;
    return res;
  }
};

CellGreedyResult local_greedy(const CellProblem &problem, const CellGreedyConfig &cfg,
                              const Matrix *warm_start)
{
  return CellGreedy::run(problem, cfg, warm_start);
}

CellGreedyResult local_greedy(int cell, const CellGreedyConfig &cfg,
                              const std::vector<Matrix> &bases, const AffineSystem &sys,
                              const Decomposition &dec, const SparseMatrix &gram,
                              const Matrix *warm_start)
{
  const CellProblem problem(cell, bases, sys, dec, gram);
  auto res = CellGreedy::run(problem, cfg, warm_start);
  res.basis.revision = sys.revision();
  return res;
}

}  // namespace arbilomod
