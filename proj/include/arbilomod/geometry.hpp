// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arbilomod/common.hpp"

namespace arbilomod
{

// Coordinates are stored in integer units of 1/1000 so that all comparisons, unions and
// differences are exact.
inline constexpr int kGeometryGrid = 1000;

struct Rect
{
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  static Rect from_unit(double x0, double y0, double x1, double y1);
  double ux0() const { return static_cast<double>(x0) / kGeometryGrid; }
  double uy0() const { return static_cast<double>(y0) / kGeometryGrid; }
  double ux1() const { return static_cast<double>(x1) / kGeometryGrid; }
  double uy1() const { return static_cast<double>(y1) / kGeometryGrid; }
  double area() const;
  bool contains(double x, double y) const;  // open rectangle

  auto operator<=>(const Rect &) const = default;
};

// The high-conductivity region: a union of axis-aligned rectangles. sigma = 1 outside,
// 1 + mu inside.
struct GeometryModel
{
  std::vector<Rect> rectangles;
  double mu_min = 1.0;
  double mu_max = 1.0e5;

  bool contains(double x, double y) const;
  double area() const;  // area of the union
  void validate() const;
  // Throws GeometryResolutionError unless every rectangle edge lies on a line of the
  // n x n lattice.
  void check_resolved(int n) const;
  bool resolved_by(int n) const;
  void check_parameter(double mu) const;

  bool operator==(const GeometryModel &) const = default;
};

GeometryModel benchmark_geometry(int k);

struct ChangeSet
{
  std::vector<Rect> added;    // in the new region but not the old
  std::vector<Rect> removed;  // in the old region but not the new
  std::vector<int> affected_domains;  // sorted, row-major domain indices

  bool empty() const { return added.empty() && removed.empty(); }
  double changed_area() const;
};

// Symmetric difference of the two regions, reported as disjoint rectangles, and the
// domains of a per_side x per_side decomposition of the unit square whose closure meets
// any changed rectangle.
ChangeSet diff(const GeometryModel &old_geom, const GeometryModel &new_geom, int per_side);

// Domains (row-major index) of a per_side x per_side decomposition whose closure meets
// the closed rectangle r.
std::vector<int> domains_touching(const Rect &r, int per_side);

nlohmann::json to_json(const GeometryModel &g);
GeometryModel geometry_from_json(const nlohmann::json &j);
GeometryModel load_geometry(const std::filesystem::path &path);
void save_geometry(const GeometryModel &g, const std::filesystem::path &path);

// "bench1".."bench5" map to the benchmark sequence; anything else is read as a file.
GeometryModel resolve_geometry(const std::string &name_or_path);

}  // namespace arbilomod
