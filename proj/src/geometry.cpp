// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace arbilomod
{

namespace
{

int to_grid(double v)
{
  const double scaled = v * kGeometryGrid;
  const double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-6)
    throw InvalidArgument("geometry coordinate " + std::to_string(v) +
                          " is not a multiple of 1/1000");
  return static_cast<int>(rounded);
}

// Elementary cells of the coordinate-compressed grid spanned by both rectangle sets.
struct CompressedGrid
{
  std::vector<int> xs, ys;

  explicit CompressedGrid(const std::vector<const std::vector<Rect> *> &sets)
  {
    for (const auto *set : sets)
      for (const Rect &r : *set)
      {
        xs.push_back(r.x0);
        xs.push_back(r.x1);
        ys.push_back(r.y0);
        ys.push_back(r.y1);
      }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  }

  int nx() const { return xs.empty() ? 0 : static_cast<int>(xs.size()) - 1; }
  int ny() const { return ys.empty() ? 0 : static_cast<int>(ys.size()) - 1; }

  // Cell (i, j) is covered by the union iff its midpoint lies inside some rectangle.
  std::vector<char> coverage(const std::vector<Rect> &rects) const
  {
    std::vector<char> cov(static_cast<std::size_t>(nx()) * ny(), 0);
    for (const Rect &r : rects)
    {
      const auto i0 = std::lower_bound(xs.begin(), xs.end(), r.x0) - xs.begin();
      const auto i1 = std::lower_bound(xs.begin(), xs.end(), r.x1) - xs.begin();
      const auto j0 = std::lower_bound(ys.begin(), ys.end(), r.y0) - ys.begin();
      const auto j1 = std::lower_bound(ys.begin(), ys.end(), r.y1) - ys.begin();
      for (auto j = j0; j < j1; ++j)
        for (auto i = i0; i < i1; ++i)
          cov[static_cast<std::size_t>(j) * nx() + i] = 1;
    }
    return cov;
  }

  // Merges marked cells into disjoint rectangles: horizontal runs per row, then runs with
  // identical extent in consecutive rows.
  std::vector<Rect> rectangles(const std::vector<char> &mask) const
  {
    std::vector<Rect> open, done;
    for (int j = 0; j < ny(); ++j)
    {
      std::vector<Rect> runs;
      for (int i = 0; i < nx();)
      {
        if (!mask[static_cast<std::size_t>(j) * nx() + i])
        {
          ++i;
          continue;
        }
        int k = i;
        while (k < nx() && mask[static_cast<std::size_t>(j) * nx() + k])
          ++k;
        runs.push_back({xs[i], ys[j], xs[k], ys[j + 1]});
        i = k;
      }
      std::vector<Rect> next;
      for (Rect &run : runs)
      {
        auto it = std::find_if(open.begin(), open.end(), [&](const Rect &o) {
          return o.x0 == run.x0 && o.x1 == run.x1 && o.y1 == run.y0;
        });
        if (it != open.end())
        {
          run.y0 = it->y0;
          open.erase(it);
        }
        next.push_back(run);
      }
      done.insert(done.end(), open.begin(), open.end());
      open = std::move(next);
    }
    done.insert(done.end(), open.begin(), open.end());
    std::sort(done.begin(), done.end());
    return done;
  }
};

}  // namespace

Rect Rect::from_unit(double x0, double y0, double x1, double y1)
{
  return {to_grid(x0), to_grid(y0), to_grid(x1), to_grid(y1)};
}

double Rect::area() const
{
  return static_cast<double>(x1 - x0) * (y1 - y0) / (double(kGeometryGrid) * kGeometryGrid);
}

bool Rect::contains(double x, double y) const
{
  return x > ux0() && x < ux1() && y > uy0() && y < uy1();
}

bool GeometryModel::contains(double x, double y) const
{
  return std::any_of(rectangles.begin(), rectangles.end(),
                     [&](const Rect &r) { return r.contains(x, y); });
}

double GeometryModel::area() const
{
  CompressedGrid grid({&rectangles});
  const auto cov = grid.coverage(rectangles);
  double a = 0.0;
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i)
      if (cov[static_cast<std::size_t>(j) * grid.nx() + i])
        a += static_cast<double>(grid.xs[i + 1] - grid.xs[i]) * (grid.ys[j + 1] - grid.ys[j]);
  return a / (double(kGeometryGrid) * kGeometryGrid);
}

void GeometryModel::validate() const
{
  for (const Rect &r : rectangles)
  {
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > kGeometryGrid || r.y1 > kGeometryGrid)
      throw InvalidArgument("rectangle outside the unit square");
    if (r.x0 >= r.x1 || r.y0 >= r.y1)
      throw InvalidArgument("degenerate rectangle");
  }
  if (!(mu_min > 0.0) || !(mu_max >= mu_min) || !std::isfinite(mu_max))
    throw InvalidArgument("invalid parameter range");
}

bool GeometryModel::resolved_by(int n) const
{
  if (n <= 0)
    return false;
  auto ok = [n](int c) { return (static_cast<long long>(c) * n) % kGeometryGrid == 0; };
  return std::all_of(rectangles.begin(), rectangles.end(), [&](const Rect &r) {
    return ok(r.x0) && ok(r.x1) && ok(r.y0) && ok(r.y1);
  });
}

void GeometryModel::check_resolved(int n) const
{
  if (!resolved_by(n))
    throw GeometryResolutionError("mesh with n = " + std::to_string(n) +
                                  " does not resolve the geometry");
}

void GeometryModel::check_parameter(double mu) const
{
  if (!(mu >= mu_min && mu <= mu_max))
    throw InvalidArgument("parameter " + std::to_string(mu) + " outside [" +
                          std::to_string(mu_min) + ", " + std::to_string(mu_max) + "]");
}

GeometryModel benchmark_geometry(int k)
{
  if (k < 1 || k > 5)
    throw InvalidArgument("benchmark geometry index must be in 1..5");
  GeometryModel g;
  g.rectangles = {Rect::from_unit(0.0, 0.0, 0.1, 1.0), Rect::from_unit(0.9, 0.0, 1.0, 1.0),
                  Rect::from_unit(0.11, 0.475, 0.89, 0.485),
                  Rect::from_unit(0.1, 0.495, 0.9, 0.505),
                  Rect::from_unit(0.11, 0.515, 0.89, 0.525)};
  // The sequence is built from set operations on the previous region; removing a piece at
  // the end of a bar is expressed by shortening that bar.
  Rect &middle = g.rectangles[3];
  if (k >= 2)
    middle.x0 = to_grid(0.11);
  if (k >= 3)
    middle.x1 = to_grid(0.89);
  if (k >= 5)
    middle.x1 = to_grid(0.9);
  if (k >= 4)
    g.rectangles.push_back(Rect::from_unit(0.1, 0.515, 0.11, 0.525));
  return g;
}

double ChangeSet::changed_area() const
{
  double a = 0.0;
  for (const Rect &r : added)
    a += r.area();
  for (const Rect &r : removed)
    a += r.area();
  return a;
}

std::vector<int> domains_touching(const Rect &r, int per_side)
{
  std::vector<int> out;
  const long long g = kGeometryGrid;
  for (int row = 0; row < per_side; ++row)
    for (int col = 0; col < per_side; ++col)
    {
      // Closed boxes [col/P, (col+1)/P] x [row/P, (row+1)/P] against the closed rectangle.
      const bool hit = static_cast<long long>(r.x0) * per_side <= (col + 1) * g &&
                       static_cast<long long>(r.x1) * per_side >= col * g &&
                       static_cast<long long>(r.y0) * per_side <= (row + 1) * g &&
                       static_cast<long long>(r.y1) * per_side >= row * g;
      if (hit)
        out.push_back(row * per_side + col);
    }
  return out;
}

ChangeSet diff(const GeometryModel &old_geom, const GeometryModel &new_geom, int per_side)
{
  CompressedGrid grid({&old_geom.rectangles, &new_geom.rectangles});
  const auto before = grid.coverage(old_geom.rectangles);
  const auto after = grid.coverage(new_geom.rectangles);
  std::vector<char> gained(before.size()), lost(before.size());
  for (std::size_t c = 0; c < before.size(); ++c)
  {
    gained[c] = after[c] && !before[c];
    lost[c] = before[c] && !after[c];
  }
  ChangeSet cs;
  cs.added = grid.rectangles(gained);
  cs.removed = grid.rectangles(lost);
  std::set<int> affected;
  for (const auto *set : {&cs.added, &cs.removed})
    for (const Rect &r : *set)
      for (int d : domains_touching(r, per_side))
        affected.insert(d);
  cs.affected_domains.assign(affected.begin(), affected.end());
  return cs;
}

nlohmann::json to_json(const GeometryModel &g)
{
  nlohmann::json rects = nlohmann::json::array();
  for (const Rect &r : g.rectangles)
    rects.push_back({r.ux0(), r.uy0(), r.ux1(), r.uy1()});
  return {{"version", 1}, {"rectangles", rects}, {"mu_min", g.mu_min}, {"mu_max", g.mu_max}};
}

GeometryModel geometry_from_json(const nlohmann::json &j)
{
  if (!j.is_object())
    throw InvalidArgument("geometry document must be an object");
  if (j.value("version", 1) != 1)
    throw InvalidArgument("unsupported geometry version");
  if (!j.contains("rectangles") || !j["rectangles"].is_array())
    throw InvalidArgument("geometry document lacks a rectangles array");
  GeometryModel g;
  for (const auto &r : j["rectangles"])
  {
    if (!r.is_array() || r.size() != 4)
      throw InvalidArgument("rectangle must be [x0, y0, x1, y1]");
    for (const auto &v : r)
      if (!v.is_number())
        throw InvalidArgument("rectangle coordinates must be numbers");
    g.rectangles.push_back(Rect::from_unit(r[0].get<double>(), r[1].get<double>(),
                                           r[2].get<double>(), r[3].get<double>()));
  }
  g.mu_min = j.value("mu_min", 1.0);
  g.mu_max = j.value("mu_max", 1.0e5);
  g.validate();
  return g;
}

GeometryModel load_geometry(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
    throw InvalidArgument("cannot open geometry file " + path.string());
  nlohmann::json j;
  try
  {
    in >> j;
  }
  catch (const nlohmann::json::exception &e)
  {
    throw InvalidArgument("malformed geometry file " + path.string() + ": " + e.what());
  }
  return geometry_from_json(j);
}

void save_geometry(const GeometryModel &g, const std::filesystem::path &path)
{
  std::ofstream out(path);
  if (!out)
    throw InvalidArgument("cannot write geometry file " + path.string());
  out << to_json(g).dump(2) << '\n';
}

GeometryModel resolve_geometry(const std::string &name_or_path)
{
  if (name_or_path.size() == 6 && name_or_path.rfind("bench", 0) == 0 &&
      name_or_path[5] >= '1' && name_or_path[5] <= '5')
    return benchmark_geometry(name_or_path[5] - '0');
  return load_geometry(name_or_path);
}

}  // namespace arbilomod
