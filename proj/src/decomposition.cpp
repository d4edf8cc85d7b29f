// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/decomposition.hpp"

#include <algorithm>
#include <set>

namespace arbilomod
{

namespace
{

bool is_subset(const SpaceId &small, const SpaceId &big)
{
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

bool intersects(const SpaceId &a, const SpaceId &b)
{
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end())
  {
    if (*i == *j)
      return true;
    if (*i < *j)
      ++i;
    else
      ++j;
  }
  return false;
}

using Triplet = Eigen::Triplet<double, Index>;

}  // namespace

Decomposition::Decomposition(const Mesh &mesh, const DofHandler &dofs, const DomainGrid &grid)
  : mesh_(&mesh), grid_(grid)
{
  if (grid.n != mesh.n)
    throw InvalidArgument("domain grid and mesh sizes differ");
  const int m = grid_.cells_per_domain();
  std::map<SpaceId, IndexList> groups;
  node_space_.assign(mesh.num_nodes(), -1);
  for (Index v = 0; v < mesh.num_nodes(); ++v)
    if (!dofs.is_dirichlet[v])
      groups[adjacent_domains(v)].push_back(v);

  std::array<std::vector<std::pair<SpaceId, IndexList>>, 3> ordered;
  for (auto &[xi, nodes] : groups)
  {
    const int c = xi.size() == 1 ? 0 : (xi.size() == 2 ? 1 : 2);
    ordered[c].emplace_back(xi, std::move(nodes));
  }
  for (int c = 0; c < 3; ++c)
    for (auto &[xi, nodes] : ordered[c])
    {
      Space sp;
      sp.index = static_cast<int>(spaces_.size());
      sp.xi = xi;
      sp.codim = static_cast<Codim>(c);
      sp.dofs = std::move(nodes);
      std::sort(sp.dofs.begin(), sp.dofs.end());
      std::array<int, 4> box{0, grid_.n, 0, grid_.n};
      for (int d : xi)
      {
        box[0] = std::max(box[0], grid_.col(d) * m);
        box[1] = std::min(box[1], (grid_.col(d) + 1) * m);
        box[2] = std::max(box[2], grid_.row(d) * m);
        box[3] = std::min(box[3], (grid_.row(d) + 1) * m);
      }
      sp.box = box;
      for (Index v : sp.dofs)
        node_space_[v] = sp.index;
      by_codim_[c].push_back(sp.index);
      spaces_.push_back(std::move(sp));
    }

  cell_of_domain_.assign(grid_.count(), -1);
  for (int s : by_codim_[0])
    cell_of_domain_[spaces_[s].xi[0]] = s;
  spaces_of_domain_.assign(grid_.count(), {});
  for (const Space &sp : spaces_)
    for (int d : sp.xi)
      spaces_of_domain_[d].push_back(sp.index);

  for (Space &sp : spaces_)
  {
    for (const Space &other : spaces_)
      if (other.index != sp.index && is_subset(other.xi, sp.xi))
        sp.subspaces.push_back(other.index);
    IndexList fp = sp.dofs;
    for (int z : sp.subspaces)
      fp = set_union(fp, spaces_[z].dofs);
    sp.footprint = std::move(fp);
    auto locate = [&](const IndexList &nodes) {
      IndexList pos(nodes.size());
      for (std::size_t k = 0; k < nodes.size(); ++k)
        pos[k] = static_cast<Index>(
            std::lower_bound(sp.footprint.begin(), sp.footprint.end(), nodes[k]) -
            sp.footprint.begin());
      return pos;
    };
    sp.positions[sp.index] = locate(sp.dofs);
    for (int z : sp.subspaces)
      sp.positions[z] = locate(spaces_[z].dofs);
  }

  domain_nodes_.resize(grid_.count());
  for (int d = 0; d < grid_.count(); ++d)
    domain_nodes_[d] = grid_.closed_nodes(mesh, d);
  for (const Space &sp : spaces_)
    for (int d : sp.xi)
    {
      const int i0 = grid_.col(d) * m, j0 = grid_.row(d) * m;
      IndexList in_dom, in_fp;
      for (std::size_t k = 0; k < sp.footprint.size(); ++k)
      {
        const Index v = sp.footprint[k];
        Index local = -1;
        if (mesh.kind(v) == Mesh::NodeKind::lattice)
        {
          const int i = v % (mesh.n + 1), j = v / (mesh.n + 1);
          if (i >= i0 && i <= i0 + m && j >= j0 && j <= j0 + m)
            local = (j - j0) * (m + 1) + (i - i0);
        }
        else
        {
          const Index c = v - (mesh.n + 1) * (mesh.n + 1);
          const int ci = c % mesh.n, cj = c / mesh.n;
          if (ci >= i0 && ci < i0 + m && cj >= j0 && cj < j0 + m)
            local = (m + 1) * (m + 1) + (cj - j0) * m + (ci - i0);
        }
        if (local >= 0)
        {
          in_dom.push_back(local);
          in_fp.push_back(static_cast<Index>(k));
        }
      }
      fp_in_dom_[{sp.index, d}] = std::move(in_dom);
      dom_in_fp_[{sp.index, d}] = std::move(in_fp);
    }
}

SpaceId Decomposition::adjacent_domains(Index v) const
{
  const int n = mesh_->n;
  std::set<int> doms;
  if (mesh_->kind(v) == Mesh::NodeKind::lattice)
  {
    const int i = v % (n + 1), j = v / (n + 1);
    for (int cj = j - 1; cj <= j; ++cj)
      for (int ci = i - 1; ci <= i; ++ci)
        if (ci >= 0 && ci < n && cj >= 0 && cj < n)
          doms.insert(grid_.domain_of_square(ci, cj));
  }
  else
  {
    const Index c = v - (n + 1) * (n + 1);
    doms.insert(grid_.domain_of_square(c % n, c / n));
  }
  return {doms.begin(), doms.end()};
}

int Decomposition::find(const SpaceId &xi) const
{
  for (const Space &sp : spaces_)
    if (sp.xi == xi)
      return sp.index;
  return -1;
}

std::vector<int> Decomposition::neighbourhood(int s) const
{
  const auto &b = spaces_[s].box;
  const int m = grid_.cells_per_domain();
  std::vector<int> out;
  for (int d = 0; d < grid_.count(); ++d)
  {
    const int i0 = grid_.col(d) * m, j0 = grid_.row(d) * m;
    if (i0 <= b[1] && i0 + m >= b[0] && j0 <= b[3] && j0 + m >= b[2])
      out.push_back(d);
  }
  return out;
}

IndexList Decomposition::training_dofs(int s) const
{
  const auto nb = neighbourhood(s);
  IndexList out;
  for (const Space &sp : spaces_)
    if (is_subset(sp.xi, nb))
      out.insert(out.end(), sp.dofs.begin(), sp.dofs.end());
  std::sort(out.begin(), out.end());
  return out;
}

IndexList Decomposition::coupling_dofs(int s) const
{
  const auto nb = neighbourhood(s);
  IndexList out;
  for (const Space &sp : spaces_)
    if (intersects(sp.xi, nb) && !is_subset(sp.xi, nb))
      out.insert(out.end(), sp.dofs.begin(), sp.dofs.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Decomposition::coupling_spaces(int s) const
{
  std::vector<int> out;
  const SpaceId &xi = spaces_[s].xi;
  for (const Space &sp : spaces_)
    if (intersects(sp.xi, xi) && !is_subset(sp.xi, xi))
      out.push_back(sp.index);
  return out;
}

int Decomposition::colour(int s) const
{
  const auto &b = spaces_[s].box;
  const int m = grid_.cells_per_domain();
  return (b[0] / m) % 2 + 2 * ((b[2] / m) % 2);
}

const IndexList &Decomposition::footprint_in_domain(int s, int d) const
{
  return fp_in_dom_.at({s, d});
}

const IndexList &Decomposition::domain_in_footprint(int s, int d) const
{
  return dom_in_fp_.at({s, d});
}

ExtensionOperator::ExtensionOperator(const AffineSystem &sys, const Decomposition &dec,
                                     double mu_bar)
  : sys_(sys), dec_(dec), mu_bar_(mu_bar)
{
  cell_solver_.resize(dec.num_spaces());
  for (int c : dec.cells())
    factor_cell(c);
  const int m = dec.grid().cells_per_domain();
  for (int v : dec.vertices())
  {
    const Space &vs = dec.space(v);
    const int iv = vs.box[0], jv = vs.box[2];
    for (int f : vs.subspaces)
    {
      const Space &fs = dec.space(f);
      if (fs.codim != Codim::face)
        continue;
      Vector trace(static_cast<Index>(fs.dofs.size()));
      const int n = sys.mesh().n;
      for (std::size_t k = 0; k < fs.dofs.size(); ++k)
      {
        const Index node = fs.dofs[k];
        const int i = node % (n + 1), j = node / (n + 1);
        const int dist = std::abs(i - iv) + std::abs(j - jv);
        trace[static_cast<Index>(k)] = 1.0 - static_cast<double>(dist) / m;
      }
      vertex_trace_[{v, f}] = std::move(trace);
    }
  }
}

void ExtensionOperator::factor_cell(int c)
{
  const Space &cs = dec_.space(c);
  const int d = cs.xi[0];
  const DomainOperator &op = sys_.domain(d);
  const SparseMatrix a = mu_bar_ * op.a_high + op.a_full;
  const IndexList &rows = dec_.footprint_in_domain(c, d);
  cell_solver_[c].factorize(restrict_matrix(a, rows));
  // Coupling blocks of every space that extends into this cell.
  for (int s : dec_.spaces_of_domain(d))
  {
    const Space &sp = dec_.space(s);
    if (sp.codim == Codim::cell)
      continue;
    const IndexList &cols_dom = dec_.footprint_in_domain(s, d);
    const IndexList &cols_fp = dec_.domain_in_footprint(s, d);
    const SparseMatrix block = restrict_matrix(a, rows, cols_dom);
    std::vector<Triplet> trip;
    for (Index k = 0; k < block.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(block, k); it; ++it)
        trip.emplace_back(it.row(), cols_fp[k], it.value());
    SparseMatrix full(static_cast<Index>(rows.size()), static_cast<Index>(sp.footprint.size()));
    full.setFromTriplets(trip.begin(), trip.end());
    coupling_[{s, c}] = std::move(full);
  }
}

void ExtensionOperator::update(const std::vector<int> &domains)
{
  for (int d : domains)
  {
    const int c = dec_.cell_of_domain(d);
    if (c >= 0)
      factor_cell(c);
  }
}

const Vector &ExtensionOperator::vertex_trace(int vertex, int face) const
{
  return vertex_trace_.at({vertex, face});
}

Matrix ExtensionOperator::extend(int s, const Matrix &data) const
{
  const Space &sp = dec_.space(s);
  if (data.rows() != static_cast<Index>(sp.dofs.size()))
    throw InvalidArgument("extension data does not match the space dimension");
  if (sp.codim == Codim::cell)
    return data;
  Matrix w = Matrix::Zero(static_cast<Index>(sp.footprint.size()), data.cols());
  const IndexList &own = sp.positions.at(s);
  for (std::size_t k = 0; k < own.size(); ++k)
    w.row(own[k]) = data.row(static_cast<Index>(k));
  if (sp.codim == Codim::vertex)
    for (int f : sp.subspaces)
    {
      if (dec_.space(f).codim != Codim::face)
        continue;
      const Vector &tr = vertex_trace_.at({s, f});
      const IndexList &pos = sp.positions.at(f);
      for (std::size_t k = 0; k < pos.size(); ++k)
        w.row(pos[k]) = tr[static_cast<Index>(k)] * data.row(0);
    }
  for (int c : sp.subspaces)
  {
    if (dec_.space(c).codim != Codim::cell)
      continue;
    const Matrix rhs = -(coupling_.at({s, c}) * w);
    const Matrix x = cell_solver_[c].solve(rhs);
    const IndexList &pos = sp.positions.at(c);
    for (std::size_t k = 0; k < pos.size(); ++k)
      w.row(pos[k]) = x.row(static_cast<Index>(k));
  }
  return w;
}

Vector ExtensionOperator::extend(int s, const Vector &data) const
{
  return extend(s, Matrix(data)).col(0);
}

std::vector<Matrix> ExtensionOperator::project(const Matrix &field) const
{
  Matrix r = field;
  std::vector<Matrix> parts(dec_.num_spaces());
  for (Codim c : {Codim::vertex, Codim::face, Codim::cell})
    for (int s : dec_.of_codim(c))
    {
      const Space &sp = dec_.space(s);
      parts[s] = extend(s, restrict_rows(r, sp.dofs));
      for (std::size_t k = 0; k < sp.footprint.size(); ++k)
        r.row(sp.footprint[k]) -= parts[s].row(static_cast<Index>(k));
    }
  return parts;
}

std::vector<Vector> ExtensionOperator::project(const Vector &field) const
{
  auto parts = project(Matrix(field));
  std::vector<Vector> out;
  out.reserve(parts.size());
  for (auto &p : parts)
    out.emplace_back(p.col(0));
  return out;
}

Matrix ExtensionOperator::project_part(
    int s, const std::function<Matrix(const IndexList &)> &values) const
{
  const Space &target = dec_.space(s);
  // Every space whose part can touch U_xi contains xi.
  std::vector<int> chain;
  for (Codim c : {Codim::vertex, Codim::face, Codim::cell})
    for (int z : dec_.of_codim(c))
      if (std::includes(dec_.space(z).xi.begin(), dec_.space(z).xi.end(), target.xi.begin(),
                        target.xi.end()))
        chain.push_back(z);
  std::map<int, Matrix> parts;
  for (int z : chain)
  {
    const Space &zs = dec_.space(z);
    Matrix val = values(zs.dofs);
    for (auto &[y, part] : parts)
    {
      const Space &ys = dec_.space(y);
      auto it = ys.positions.find(z);
      if (it == ys.positions.end())
        continue;
      for (std::size_t k = 0; k < it->second.size(); ++k)
        val.row(static_cast<Index>(k)) -= part.row(it->second[k]);
    }
    parts[z] = extend(z, val);
  }
  return parts.at(s);
}

Matrix ExtensionOperator::project_part(int s, const Matrix &field) const
{
  return project_part(s, [&](const IndexList &nodes) { return restrict_rows(field, nodes); });
}

std::vector<Matrix> ExtensionOperator::project_within(int s, const Matrix &on_footprint) const
{
  const Space &sp = dec_.space(s);
  std::vector<int> members = sp.subspaces;
  members.push_back(s);
  Matrix r = on_footprint;
  std::map<int, Matrix> parts;
  for (Codim c : {Codim::vertex, Codim::face, Codim::cell})
    for (int z : members)
    {
      const Space &zs = dec_.space(z);
      if (zs.codim != c)
        continue;
      const Matrix part = extend(z, restrict_rows(r, sp.positions.at(z)));
      // Map the footprint of z into the footprint of s through the common subspaces.
      std::vector<int> inner = zs.subspaces;
      inner.push_back(z);
      for (int y : inner)
      {
        const IndexList &from = zs.positions.at(y);
        const IndexList &to = sp.positions.at(y);
        for (std::size_t k = 0; k < from.size(); ++k)
          r.row(to[k]) -= part.row(from[k]);
      }
      parts[z] = part;
    }
  std::vector<Matrix> out;
  out.reserve(members.size());
  for (int z : members)
    out.push_back(std::move(parts.at(z)));
  return out;
}

Vector footprint_to_global(const Space &sp, const Vector &values, Index total)
{
  Vector out = Vector::Zero(total);
  for (std::size_t k = 0; k < sp.footprint.size(); ++k)
    out[sp.footprint[k]] = values[static_cast<Index>(k)];
  return out;
}

}  // namespace arbilomod
