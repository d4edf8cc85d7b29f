// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "arbilomod/decomposition.hpp"

using namespace arbilomod;

namespace
{

struct Fixture
{
  std::shared_ptr<const Mesh> mesh;
  std::unique_ptr<AffineSystem> sys;
  std::unique_ptr<Decomposition> dec;

  Fixture(int n, int per_side, const GeometryModel &g = {})
  {
    mesh = std::make_shared<Mesh>(build_mesh(n));
    sys = std::make_unique<AffineSystem>(mesh, g, per_side);
    dec = std::make_unique<Decomposition>(*mesh, sys->dofs(), sys->grid());
  }
};

double hat(double x, double y, double xv, double yv, double h)
{
  return std::max(0.0, 1.0 - std::abs(x - xv) / h) * std::max(0.0, 1.0 - std::abs(y - yv) / h);
}

Vector random_free_field(const AffineSystem &sys, std::mt19937_64 &rng)
{
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Vector v = Vector::Zero(sys.mesh().num_nodes());
  for (Index k : sys.dofs().free_dofs)
    v[k] = uni(rng);
  return v;
}

GeometryModel stripes()
{
  GeometryModel g;
  g.rectangles = {Rect::from_unit(0.0, 0.0, 0.125, 1.0), Rect::from_unit(0.125, 0.5, 0.875, 0.625)};
  return g;
}

}  // namespace

TEST(Classification, BenchmarkCountsAtN200)
{
  Fixture s(200, 8);
  const auto &dec = *s.dec;
  EXPECT_EQ(dec.cells().size(), 64u);
  EXPECT_EQ(dec.faces().size(), 112u);
  EXPECT_EQ(dec.vertices().size(), 49u);
  std::size_t total = 0;
  for (const Space &sp : dec.spaces())
    total += sp.dofs.size();
  EXPECT_EQ(total, s.sys->dofs().free_dofs.size());

  const int interior_cell = dec.cell_of_domain(3 * 8 + 3);
  EXPECT_EQ(dec.space(interior_cell).dofs.size(), 1201u);
  const int face = dec.find({3 * 8 + 3, 4 * 8 + 3});
  ASSERT_GE(face, 0);
  EXPECT_EQ(dec.neighbourhood(face).size(), 6u);
  const auto train = dec.training_dofs(face);
  const auto ring = dec.coupling_dofs(face);
  EXPECT_EQ(train.size() + ring.size(), 7626u);
  const int vertex = dec.find({2 * 8 + 2, 2 * 8 + 3, 3 * 8 + 2, 3 * 8 + 3});
  ASSERT_GE(vertex, 0);
  EXPECT_EQ(dec.overlapping_dofs(vertex).size(), 4901u);
}

TEST(Classification, CountsAtN400)
{
  Fixture s(400, 8);
  const auto &dec = *s.dec;
  EXPECT_EQ(dec.space(dec.cell_of_domain(27)).dofs.size(), 4901u);
  const int face = dec.find({27, 35});
  EXPECT_EQ(dec.training_dofs(face).size() + dec.coupling_dofs(face).size(), 30251u);
}

TEST(Classification, EveryDofHasOneToFourDomains)
{
  Fixture s(16, 4);
  for (Index v : s.sys->dofs().free_dofs)
  {
    const auto xi = s.dec->adjacent_domains(v);
    EXPECT_GE(xi.size(), 1u);
    EXPECT_LE(xi.size(), 4u);
    EXPECT_EQ(s.dec->space(s.dec->node_space()[v]).xi, xi);
  }
}

TEST(Classification, VertexOracle)
{
  Fixture s(200, 8);
  const Mesh &m = *s.mesh;
  const int n = m.n, h = 25;
  int oracle = 0;
  for (int j = 1; j < n; ++j)
    for (int i = 1; i < n; ++i)
      if (i % h == 0 && j % h == 0)
        ++oracle;
  EXPECT_EQ(oracle, 49);
  int found = 0;
  for (int v : s.dec->vertices())
  {
    EXPECT_EQ(s.dec->space(v).xi.size(), 4u);
    EXPECT_EQ(s.dec->space(v).dofs.size(), 1u);
    ++found;
  }
  EXPECT_EQ(found, oracle);
  // A centre node inside domain 5 belongs to the cell space {5}.
  const Index c = m.center(5 * 25 + 3, 0 * 25 + 7);
  EXPECT_EQ(s.dec->space(s.dec->node_space()[c]).xi, SpaceId{5});
}

TEST(Neighbourhood, TruncatedAtBoundary)
{
  Fixture s(16, 4);
  // Vertical face between domains 0 and 1 on the bottom row.
  const int f = s.dec->find({0, 1});
  EXPECT_EQ(s.dec->neighbourhood(f), (std::vector<int>{0, 1, 4, 5}));
  const int g = s.dec->find({5, 6});
  EXPECT_EQ(s.dec->neighbourhood(g).size(), 6u);
}

TEST(Neighbourhood, CouplingIsOneLayerRing)
{
  Fixture s(16, 4);
  const Mesh &m = *s.mesh;
  for (int f : s.dec->faces())
  {
    // Bounding box of the neighbourhood in lattice units.
    int i0 = 1 << 20, i1 = -1, j0 = 1 << 20, j1 = -1;
    for (int d : s.dec->neighbourhood(f))
    {
      i0 = std::min(i0, s.dec->grid().col(d) * 4);
      i1 = std::max(i1, s.dec->grid().col(d) * 4 + 4);
      j0 = std::min(j0, s.dec->grid().row(d) * 4);
      j1 = std::max(j1, s.dec->grid().row(d) * 4 + 4);
    }
    IndexList ring, inner;
    for (Index v : s.sys->dofs().free_dofs)
    {
      const double x = m.nodes[v][0] * 16, y = m.nodes[v][1] * 16;
      // Nodes on the top or bottom of the unit square have no squares beyond them.
      const bool y_inside = (y > j0 && y < j1) || (y == 0 && j0 == 0) || (y == 16 && j1 == 16);
      const bool inside = x > i0 && x < i1 && y_inside;
      const bool closed = x >= i0 && x <= i1 && y >= j0 && y <= j1;
      if (inside)
        inner.push_back(v);
      else if (closed)
        ring.push_back(v);
    }
    std::sort(ring.begin(), ring.end());
    std::sort(inner.begin(), inner.end());
    EXPECT_EQ(s.dec->coupling_dofs(f), ring) << f;
    EXPECT_EQ(s.dec->training_dofs(f), inner) << f;
  }
}

TEST(Overlap, PatchMultiplicityAndColouring)
{
  Fixture s(16, 4);
  const auto &dec = *s.dec;
  EXPECT_EQ(dec.vertices().size(), 9u);
  std::vector<int> count(s.mesh->num_nodes(), 0);
  for (int v : dec.vertices())
    for (Index k : dec.overlapping_dofs(v))
      ++count[k];
  int max_count = 0;
  for (Index k : s.sys->dofs().free_dofs)
  {
    EXPECT_GE(count[k], 1);
    max_count = std::max(max_count, count[k]);
  }
  EXPECT_EQ(max_count, 4);
  for (int a : dec.vertices())
    for (int b : dec.vertices())
      if (a < b && dec.colour(a) == dec.colour(b))
      {
        const IndexList &pa = dec.overlapping_dofs(a);
        const IndexList &pb = dec.overlapping_dofs(b);
        IndexList common;
        std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(),
                              std::back_inserter(common));
        EXPECT_TRUE(common.empty());
      }
  std::set<int> colours;
  for (int v : dec.vertices())
    colours.insert(dec.colour(v));
  EXPECT_EQ(colours.size(), 4u);
}

TEST(Extension, IdentityZeroAndTrace)
{
  Fixture s(16, 4, stripes());
  ExtensionOperator ext(*s.sys, *s.dec);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-1, 1);
  for (const Space &sp : s.dec->spaces())
  {
    Vector phi(static_cast<Index>(sp.dofs.size()));
    for (Index k = 0; k < phi.size(); ++k)
      phi[k] = uni(rng);
    const Vector e = ext.extend(sp.index, phi);
    ASSERT_EQ(e.size(), static_cast<Index>(sp.footprint.size()));
    if (sp.codim == Codim::cell)
      EXPECT_EQ((e - phi).norm(), 0.0);
    EXPECT_EQ((restrict_vector(e, sp.positions.at(sp.index)) - phi).norm(), 0.0);
    EXPECT_EQ(ext.extend(sp.index, Vector(Vector::Zero(phi.size()))).norm(), 0.0);
  }
}

TEST(Extension, FaceExtensionIsDiscreteHarmonicInCells)
{
  Fixture s(16, 4, stripes());
  ExtensionOperator ext(*s.sys, *s.dec);
  const SparseMatrix a = s.sys->operator_at(ext.mu_bar());
  for (int f : s.dec->faces())
  {
    const Space &sp = s.dec->space(f);
    const Vector e = ext.extend(f, Vector(Vector::Ones(static_cast<Index>(sp.dofs.size()))));
    const Vector g = footprint_to_global(sp, e, s.mesh->num_nodes());
    const Vector r = a * g;
    for (int c : sp.subspaces)
      for (Index v : s.dec->space(c).dofs)
        EXPECT_NEAR(r[v], 0.0, 1e-6);
  }
}

TEST(Extension, LaplaceVertexFunctionsAreHatsAwayFromNeumannBoundary)
{
  Fixture s(16, 4);
  ExtensionOperator ext(*s.sys, *s.dec);
  const double h = 0.25;
  int matched = 0;
  for (int v : s.dec->vertices())
  {
    const Space &sp = s.dec->space(v);
    const Vector e = ext.extend(v, Vector(Vector::Ones(1)));
    const double xv = sp.box[0] / 16.0, yv = sp.box[2] / 16.0;
    double err = 0.0;
    for (std::size_t k = 0; k < sp.footprint.size(); ++k)
    {
      const auto &p = s.mesh->nodes[sp.footprint[k]];
      err = std::max(err, std::abs(e[static_cast<Index>(k)] - hat(p[0], p[1], xv, yv, h)));
    }
    const bool touches_neumann = yv - h <= 0.0 || yv + h >= 1.0;
    if (!touches_neumann)
    {
      EXPECT_LT(err, 1e-9);
      ++matched;
    }
    else
    {
      EXPECT_GT(err, 1e-3);
    }
  }
  EXPECT_EQ(matched, 3);
}

TEST(Projection, PartsSumToField)
{
  Fixture s(16, 4, stripes());
  ExtensionOperator ext(*s.sys, *s.dec);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial)
  {
    const Vector phi = random_free_field(*s.sys, rng);
    const auto parts = ext.project(phi);
    Vector sum = Vector::Zero(phi.size());
    for (const Space &sp : s.dec->spaces())
      sum += footprint_to_global(sp, parts[sp.index], phi.size());
    EXPECT_LE((sum - phi).norm(), 1e-10 * phi.norm());
  }
  const auto zero = ext.project(Vector(Vector::Zero(s.mesh->num_nodes())));
  for (const auto &p : zero)
    EXPECT_EQ(p.norm(), 0.0);
}

TEST(Projection, ExtendedFunctionProjectsToItself)
{
  Fixture s(16, 4, stripes());
  ExtensionOperator ext(*s.sys, *s.dec);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(-1, 1);
  for (const Space &zeta : s.dec->spaces())
  {
    Vector psi(static_cast<Index>(zeta.dofs.size()));
    for (Index k = 0; k < psi.size(); ++k)
      psi[k] = uni(rng);
    const Vector phi = footprint_to_global(zeta, ext.extend(zeta.index, psi), s.mesh->num_nodes());
    const auto parts = ext.project(phi);
    for (const Space &sp : s.dec->spaces())
    {
      if (sp.index == zeta.index)
        EXPECT_LE((footprint_to_global(sp, parts[sp.index], phi.size()) - phi).norm(),
                  1e-10 * phi.norm());
      else
        EXPECT_LE(parts[sp.index].norm(), 1e-10 * phi.norm());
    }
  }
}

TEST(Projection, IdempotentOnParts)
{
  Fixture s(16, 4, stripes());
  ExtensionOperator ext(*s.sys, *s.dec);
  std::mt19937_64 rng(9);
  const Vector phi = random_free_field(*s.sys, rng);
  const auto parts = ext.project(phi);
  for (const Space &sp : s.dec->spaces())
  {
    const Vector part = footprint_to_global(sp, parts[sp.index], phi.size());
    const auto again = ext.project(part);
    for (const Space &other : s.dec->spaces())
    {
      const double expected = other.index == sp.index ? parts[sp.index].norm() : 0.0;
      const double got = other.index == sp.index
                             ? (again[other.index] - parts[sp.index]).norm()
                             : again[other.index].norm();
      (void)expected;
      EXPECT_LE(got, 1e-10 * std::max(1.0, part.norm()));
    }
  }
}

TEST(Projection, SinglePartAndPatchVariantsAgree)
{
  Fixture s(16, 4, stripes());
  ExtensionOperator ext(*s.sys, *s.dec);
  std::mt19937_64 rng(21);
  const Vector phi = random_free_field(*s.sys, rng);
  const auto parts = ext.project(phi);
  for (const Space &sp : s.dec->spaces())
    EXPECT_LE((ext.project_part(sp.index, Matrix(phi)).col(0) - parts[sp.index]).norm(),
              1e-12 * phi.norm());

  for (int v : s.dec->vertices())
  {
    const Space &vs = s.dec->space(v);
    const Vector local = restrict_vector(phi, vs.footprint);
    const Vector field = footprint_to_global(vs, local, phi.size());
    const auto global = ext.project(field);
    const auto within = ext.project_within(v, Matrix(local));
    std::vector<int> members = vs.subspaces;
    members.push_back(v);
    ASSERT_EQ(within.size(), members.size());
    for (std::size_t k = 0; k < members.size(); ++k)
      EXPECT_LE((within[k].col(0) - global[members[k]]).norm(), 1e-12 * phi.norm());
  }
}
