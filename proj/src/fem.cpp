// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace arbilomod
{

namespace
{

using Triplet = Eigen::Triplet<double, Index>;

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v)
{
  for (int b = 0; b < 8; ++b)
  {
    h ^= (v >> (8 * b)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_sparse(std::ostream &out, const SparseMatrix &a)
{
  const std::int64_t rows = a.rows(), cols = a.cols(), nnz = a.nonZeros();
  out.write(reinterpret_cast<const char *>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char *>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char *>(&nnz), sizeof nnz);
  out.write(reinterpret_cast<const char *>(a.outerIndexPtr()), sizeof(Index) * (cols + 1));
  out.write(reinterpret_cast<const char *>(a.innerIndexPtr()), sizeof(Index) * nnz);
  out.write(reinterpret_cast<const char *>(a.valuePtr()), sizeof(double) * nnz);
}

bool read_sparse(std::istream &in, SparseMatrix &a)
{
  std::int64_t rows = 0, cols = 0, nnz = 0;
  in.read(reinterpret_cast<char *>(&rows), sizeof rows);
  in.read(reinterpret_cast<char *>(&cols), sizeof cols);
  in.read(reinterpret_cast<char *>(&nnz), sizeof nnz);
  if (!in || rows < 0 || cols < 0 || nnz < 0 || nnz > rows * cols)
    return false;
  a.resize(rows, cols);
  a.resizeNonZeros(nnz);
  in.read(reinterpret_cast<char *>(a.outerIndexPtr()), sizeof(Index) * (cols + 1));
  in.read(reinterpret_cast<char *>(a.innerIndexPtr()), sizeof(Index) * nnz);
  in.read(reinterpret_cast<char *>(a.valuePtr()), sizeof(double) * nnz);
  return static_cast<bool>(in);
}

std::filesystem::path cache_dir()
{
  const char *env = std::getenv("ARBILOMOD_CACHE");
  if (env == nullptr || *env == '\0')
    return {};
  return env;
}

}  // namespace

std::array<double, 2> Mesh::centroid(Index t) const
{
  const auto &tri = triangles[t];
  return {(nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0,
          (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0};
}

double Mesh::triangle_area(Index t) const
{
  const auto &tri = triangles[t];
  const auto &a = nodes[tri[0]], &b = nodes[tri[1]], &c = nodes[tri[2]];
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

Mesh build_mesh(int n)
{
  if (n <= 0)
    throw InvalidArgument("mesh size n must be positive");
  Mesh m;
  m.n = n;
  const double h = 1.0 / n;
  m.nodes.reserve(static_cast<std::size_t>(n + 1) * (n + 1) + static_cast<std::size_t>(n) * n);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.nodes.push_back({i * h, j * h});
  for (int cj = 0; cj < n; ++cj)
    for (int ci = 0; ci < n; ++ci)
      m.nodes.push_back({(ci + 0.5) * h, (cj + 0.5) * h});
  m.triangles.reserve(static_cast<std::size_t>(4) * n * n);
  for (int cj = 0; cj < n; ++cj)
    for (int ci = 0; ci < n; ++ci)
    {
      const Index a = m.lattice(ci, cj), b = m.lattice(ci + 1, cj);
      const Index c = m.lattice(ci + 1, cj + 1), d = m.lattice(ci, cj + 1);
      const Index e = m.center(ci, cj);
      m.triangles.push_back({a, b, e});
      m.triangles.push_back({b, c, e});
      m.triangles.push_back({c, d, e});
      m.triangles.push_back({d, a, e});
    }
  return m;
}

DofHandler::DofHandler(const Mesh &mesh)
  : total(mesh.num_nodes()), is_dirichlet(mesh.num_nodes(), 0), free_index(mesh.num_nodes(), -1)
{
  for (Index v = 0; v < total; ++v)
  {
    const double x = mesh.nodes[v][0];
    if (x == 0.0 || x == 1.0)
    {
      is_dirichlet[v] = 1;
      dirichlet_dofs.push_back(v);
    }
    else
    {
      free_index[v] = static_cast<Index>(free_dofs.size());
      free_dofs.push_back(v);
    }
  }
}

Eigen::Matrix3d element_stiffness(const Mesh &mesh, Index t)
{
  const auto &tri = mesh.triangles[t];
  Eigen::Matrix<double, 2, 3> grads;
  const auto &p0 = mesh.nodes[tri[0]], &p1 = mesh.nodes[tri[1]], &p2 = mesh.nodes[tri[2]];
  const double area = mesh.triangle_area(t);
  // Gradient of barycentric coordinate k is the rotated opposite edge over twice the area.
  grads << p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1], p2[0] - p1[0], p0[0] - p2[0],
      p1[0] - p0[0];
  grads /= 2.0 * area;
  return area * grads.transpose() * grads;
}

Eigen::Matrix3d element_mass(const Mesh &mesh, Index t)
{
  Eigen::Matrix3d m;
  m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  return m * (mesh.triangle_area(t) / 12.0);
}

SparseMatrix assemble_stiffness(const Mesh &mesh, const std::vector<char> &mask)
{
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(9) * mesh.num_triangles());
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    if (!mask.empty() && !mask[t])
      continue;
    const auto k = element_stiffness(mesh, t);
    const auto &tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trip.emplace_back(tri[a], tri[b], k(a, b));
  }
  SparseMatrix a(mesh.num_nodes(), mesh.num_nodes());
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

SparseMatrix assemble_mass(const Mesh &mesh)
{
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(9) * mesh.num_triangles());
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto m = element_mass(mesh, t);
    const auto &tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trip.emplace_back(tri[a], tri[b], m(a, b));
  }
  SparseMatrix a(mesh.num_nodes(), mesh.num_nodes());
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

SparseMatrix h1_gram(const Mesh &mesh)
{
  SparseMatrix g = assemble_mass(mesh) + assemble_stiffness(mesh);
  g.makeCompressed();
  return g;
}

std::vector<char> high_triangles(const Mesh &mesh, const GeometryModel &geom)
{
  std::vector<char> high(mesh.num_triangles(), 0);
  for (Index t = 0; t < mesh.num_triangles(); ++t)
  {
    const auto c = mesh.centroid(t);
    high[t] = geom.contains(c[0], c[1]) ? 1 : 0;
  }
  return high;
}

DomainGrid::DomainGrid(int n_, int per_side_) : n(n_), per_side(per_side_)
{
  if (per_side <= 0 || n <= 0 || n % per_side != 0)
    throw InvalidArgument("domain grid " + std::to_string(per_side) +
                          " does not divide the mesh size " + std::to_string(n));
}

IndexList DomainGrid::closed_nodes(const Mesh &mesh, int d) const
{
  const int m = cells_per_domain();
  const int i0 = col(d) * m, j0 = row(d) * m;
  IndexList out;
  out.reserve(static_cast<std::size_t>(m + 1) * (m + 1) + static_cast<std::size_t>(m) * m);
  for (int j = j0; j <= j0 + m; ++j)
    for (int i = i0; i <= i0 + m; ++i)
      out.push_back(mesh.lattice(i, j));
  for (int cj = j0; cj < j0 + m; ++cj)
    for (int ci = i0; ci < i0 + m; ++ci)
      out.push_back(mesh.center(ci, cj));
  return out;
}

IndexList DomainGrid::triangles(const Mesh &mesh, int d) const
{
  const int m = cells_per_domain();
  const int i0 = col(d) * m, j0 = row(d) * m;
  IndexList out;
  out.reserve(static_cast<std::size_t>(4) * m * m);
  for (int cj = j0; cj < j0 + m; ++cj)
    for (int ci = i0; ci < i0 + m; ++ci)
      for (int k = 0; k < 4; ++k)
        out.push_back(4 * (cj * mesh.n + ci) + k);
  return out;
}

AffineSystem::AffineSystem(std::shared_ptr<const Mesh> mesh, const GeometryModel &geom,
                           int per_side)
  : mesh_(std::move(mesh)), dofs_(*mesh_), grid_(mesh_->n, per_side), geom_(geom)
{
  geom_.validate();
  geom_.check_resolved(mesh_->n);
  high_ = high_triangles(*mesh_, geom_);
  shift_.resize(mesh_->num_nodes());
  for (Index v = 0; v < mesh_->num_nodes(); ++v)
    shift_[v] = 1.0 - 2.0 * mesh_->nodes[v][0];
  domains_.resize(grid_.count());
  for (int d = 0; d < grid_.count(); ++d)
    build_domain(d);
  rebuild_global();
}

int AffineSystem::update_geometry(const GeometryModel &geom, const std::vector<int> &domains)
{
  geom.validate();
  geom.check_resolved(mesh_->n);
  if (geom == geom_)
    return 0;
  geom_ = geom;
  high_ = high_triangles(*mesh_, geom_);
  std::vector<int> todo = domains;
  if (todo.empty())
    for (int d = 0; d < grid_.count(); ++d)
      todo.push_back(d);
  int rebuilt = 0;
  for (int d : todo)
  {
    const std::uint64_t before = domains_[d].key;
    build_domain(d);
    rebuilt += domains_[d].key != before ? 1 : 0;
  }
  ++revision_;
  rebuild_global();
  return rebuilt;
}

void AffineSystem::build_domain(int d)
{
  const Mesh &mesh = *mesh_;
  DomainOperator op;
  op.nodes = grid_.closed_nodes(mesh, d);
  const IndexList tris = grid_.triangles(mesh, d);
  std::uint64_t key = 0xcbf29ce484222325ull;
  key = fnv1a(key, static_cast<std::uint64_t>(mesh.n));
  key = fnv1a(key, static_cast<std::uint64_t>(grid_.per_side));
  key = fnv1a(key, static_cast<std::uint64_t>(d));
  for (Index t : tris)
    key = fnv1a(key, static_cast<std::uint64_t>(high_[t]));
  op.key = key;

  const auto dir = cache_dir();
  std::filesystem::path file;
  if (!dir.empty())
  {
    char name[64];
    std::snprintf(name, sizeof name, "arbilomod-domain-%016llx.bin",
                  static_cast<unsigned long long>(key));
    file = dir / name;
    std::ifstream in(file, std::ios::binary);
    if (in && read_sparse(in, op.a_high) && read_sparse(in, op.a_full) &&
        op.a_high.rows() == static_cast<Index>(op.nodes.size()))
    {
      ++cache_hits_;
      domains_[d] = std::move(op);
      return;
    }
  }

  auto local = [&](Index v) {
    return static_cast<Index>(std::lower_bound(op.nodes.begin(), op.nodes.end(), v) -
                              op.nodes.begin());
  };
  std::vector<Triplet> th, tf;
  th.reserve(9 * tris.size());
  tf.reserve(9 * tris.size());
  for (Index t : tris)
  {
    const auto k = element_stiffness(mesh, t);
    const auto &tri = mesh.triangles[t];
    const std::array<Index, 3> loc{local(tri[0]), local(tri[1]), local(tri[2])};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
      {
        tf.emplace_back(loc[a], loc[b], k(a, b));
        // Explicit zeros keep the pattern of the high component equal to the full one.
        th.emplace_back(loc[a], loc[b], high_[t] ? k(a, b) : 0.0);
      }
  }
  const auto sz = static_cast<Index>(op.nodes.size());
  op.a_high.resize(sz, sz);
  op.a_full.resize(sz, sz);
  op.a_high.setFromTriplets(th.begin(), th.end());
  op.a_full.setFromTriplets(tf.begin(), tf.end());
  op.a_high.makeCompressed();
  op.a_full.makeCompressed();
  if (!file.empty())
  {
    ++cache_misses_;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto tmp = file.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      write_sparse(out, op.a_high);
      write_sparse(out, op.a_full);
    }
    std::filesystem::rename(tmp, file, ec);
  }
  domains_[d] = std::move(op);
}

void AffineSystem::rebuild_global()
{
  std::vector<Triplet> th, tf;
  for (const auto &op : domains_)
  {
    for (Index c = 0; c < op.a_full.outerSize(); ++c)
    {
      for (SparseMatrix::InnerIterator it(op.a_full, c); it; ++it)
        tf.emplace_back(op.nodes[it.row()], op.nodes[c], it.value());
      for (SparseMatrix::InnerIterator it(op.a_high, c); it; ++it)
        th.emplace_back(op.nodes[it.row()], op.nodes[c], it.value());
    }
  }
  const Index nn = mesh_->num_nodes();
  a_high_.resize(nn, nn);
  a_full_.resize(nn, nn);
  a_high_.setFromTriplets(th.begin(), th.end());
  a_full_.setFromTriplets(tf.begin(), tf.end());
  a_high_.makeCompressed();
  a_full_.makeCompressed();
  f_high_ = -(a_high_ * shift_);
  f_full_ = -(a_full_ * shift_);
}

SparseMatrix AffineSystem::operator_at(double mu) const
{
  SparseMatrix a = mu * a_high_ + a_full_;
  a.makeCompressed();
  return a;
}

SparseMatrix restrict_matrix(const SparseMatrix &a, const IndexList &rows, const IndexList &cols)
{
  std::vector<Index> map(a.rows(), -1);
  for (std::size_t k = 0; k < rows.size(); ++k)
    map[rows[k]] = static_cast<Index>(k);
  std::vector<Triplet> trip;
  for (std::size_t k = 0; k < cols.size(); ++k)
    for (SparseMatrix::InnerIterator it(a, cols[k]); it; ++it)
      if (map[it.row()] >= 0)
        trip.emplace_back(map[it.row()], static_cast<Index>(k), it.value());
  SparseMatrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

Vector restrict_vector(const Vector &v, const IndexList &idx)
{
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    out[static_cast<Index>(k)] = v[idx[k]];
  return out;
}

Matrix restrict_rows(const Matrix &m, const IndexList &idx)
{
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k)
    out.row(static_cast<Index>(k)) = m.row(idx[k]);
  return out;
}

void scatter_add(Vector &target, const IndexList &idx, const Vector &values)
{
  for (std::size_t k = 0; k < idx.size(); ++k)
    target[idx[k]] += values[static_cast<Index>(k)];
}

void SparseSpdSolver::factorize(const SparseMatrix &a)
{
  size_ = a.rows();
  if (size_ == 0)
  {
    llt_.reset();
    return;
  }
  llt_ = std::make_shared<SparseLLT>();
  llt_->compute(a);
  if (llt_->info() != Eigen::Success)
    throw LinearSolverError("sparse Cholesky factorization failed (size " +
                            std::to_string(size_) + ")");
}

Vector SparseSpdSolver::solve(const Vector &b) const
{
  if (size_ == 0)
    return Vector(0);
  return llt_->solve(b);
}

Matrix SparseSpdSolver::solve(const Matrix &b) const
{
  if (size_ == 0)
    return Matrix(0, b.cols());
  return llt_->solve(b);
}

FullSolver::FullSolver(const AffineSystem &sys) : sys_(sys)
{
  high_ff_ = restrict_matrix(sys.a_high(), sys.dofs().free_dofs);
  full_ff_ = restrict_matrix(sys.a_full(), sys.dofs().free_dofs);
}

Vector FullSolver::solve(double mu)
{
  sys_.geometry().check_parameter(mu);
  const SparseMatrix a = mu * high_ff_ + full_ff_;
  if (!llt_)
  {
    llt_ = std::make_unique<SparseLLT>();
    llt_->analyzePattern(a);
  }
  llt_->factorize(a);
  if (llt_->info() != Eigen::Success)
    throw LinearSolverError("full-order factorization failed");
  const Vector f = restrict_vector(sys_.rhs(mu), sys_.dofs().free_dofs);
  const Vector x = llt_->solve(f);
  const double res = (a * x - f).norm();
  const double scale = std::max(f.norm(), 1e-300);
  if (!(res <= 1e-8 * scale))
    throw LinearSolverError("full-order solve did not converge", res / scale);
  Vector u = sys_.shift();
  const auto &free = sys_.dofs().free_dofs;
  for (std::size_t k = 0; k < free.size(); ++k)
    u[free[k]] += x[static_cast<Index>(k)];
  return u;
}

Vector solve_full(const AffineSystem &sys, double mu)
{
  FullSolver s(sys);
  return s.solve(mu);
}

RieszSolver::RieszSolver(const SparseMatrix &gram, IndexList subspace)
  : subspace_(std::move(subspace))
{
  solver_.factorize(restrict_matrix(gram, subspace_));
}

Vector RieszSolver::riesz_local(const Vector &f_local) const { return solver_.solve(f_local); }

double RieszSolver::dual_norm_local(const Vector &f_local) const
{
  if (subspace_.empty())
    return 0.0;
  return std::sqrt(std::max(0.0, f_local.dot(solver_.solve(f_local))));
}

double RieszSolver::dual_norm(const Vector &f_global) const
{
  return dual_norm_local(restrict_vector(f_global, subspace_));
}

double dual_norm(const SparseMatrix &gram, const Vector &f, const IndexList &subspace)
{
  if (subspace.empty())
    return 0.0;
  RieszSolver r(gram, subspace);
  return r.dual_norm(f);
}

IndexList set_union(const IndexList &a, const IndexList &b)
{
  IndexList out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

IndexList set_difference(const IndexList &a, const IndexList &b)
{
  IndexList out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool set_contains(const IndexList &sorted, Index v)
{
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

}  // namespace arbilomod
