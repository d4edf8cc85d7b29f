// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arbilomod/cell_greedy.hpp"
#include "arbilomod/decomposition.hpp"
#include "arbilomod/enrichment.hpp"
#include "arbilomod/estimator.hpp"
#include "arbilomod/fem.hpp"
#include "arbilomod/geometry.hpp"
#include "arbilomod/reduced.hpp"
#include "arbilomod/training.hpp"

namespace arbilomod
{

// Which bases survive a geometry change.
//   none          every basis is rebuilt (independent runs)
//   adjacent      face bases whose own domains meet an affected domain are retrained
//   neighbourhood face bases whose training neighbourhood meets an affected domain are
//                 retrained
// Vertex bases are rebuilt when one of their domains is affected; cell bases when their
// domain or any retrained coupling space touches them.
enum class ReusePolicy
{
  none,
  neighbourhood,
  adjacent
};

ReusePolicy reuse_policy_from_string(const std::string &s);
std::string to_string(ReusePolicy p);

struct Invalidation
{
  std::vector<int> faces, vertices, cells;
};

// Spaces whose bases must be rebuilt after the given domains changed. Cells are invalidated
// when their own domain changed or when any space coupling to them is invalidated.
Invalidation invalidated_spaces(const Decomposition &dec, const std::vector<int> &affected,
                                ReusePolicy policy);

struct SessionConfig
{
  int n = 200;
  int per_side = 8;
  double mu_bar = 1.0e5;
  TrainingConfig training;
  bool use_training = true;
  double eps_greedy = 1.0e-3;
  EnrichmentConfig enrichment;
  std::string alpha = "closed-form";  // "closed-form" or "rigorous"
  double c_pu = 1.0;
  ReusePolicy reuse = ReusePolicy::adjacent;
  int threads = 0;  // <= 0: default thread count

  void validate() const;
  std::function<double(double)> alpha_function() const;
  CellGreedyConfig greedy_config() const;
  EstimatorConstants estimator_constants() const;
  nlohmann::json to_json() const;
  static SessionConfig from_json(const nlohmann::json &j);
};

struct SessionStats
{
  int trainings_run = 0;
  int trainings_skipped = 0;
  int greedys_run = 0;
  int greedys_skipped = 0;
  int vertex_builds = 0;
  int enrichment_iterations = 0;
  int enrichment_greedys = 0;

  nlohmann::json to_json() const;
  static SessionStats from_json(const nlohmann::json &j);
  bool operator==(const SessionStats &) const = default;
};

struct ChangeSummary
{
  ChangeSet change;
  int revision = 0;
  std::vector<int> faces, vertices, cells;  // invalidated spaces
  int trainings_rerun = 0;
  int greedys_rerun = 0;
  int domains_reassembled = 0;

  nlohmann::json to_json() const;
};

// Full workflow state for one geometry revision: discretization, local bases, reduced model
// and estimator, plus the bookkeeping of what was rebuilt or reused.
class Session
{
public:
  Session(const GeometryModel &geom, SessionConfig cfg);
  ~Session();
  Session(const Session &) = delete;
  Session &operator=(const Session &) = delete;

  const SessionConfig &config() const { return cfg_; }
  const GeometryModel &geometry() const { return sys_->geometry(); }
  int revision() const { return sys_->revision(); }
  const SessionStats &stats() const { return stats_; }
  const AffineSystem &system() const { return *sys_; }
  const Decomposition &decomposition() const { return *dec_; }
  const ExtensionOperator &extension() const { return *ext_; }
  const SparseMatrix &gram() const { return gram_; }
  const Estimator &estimator() const { return *est_; }
  ReducedModel &reduced() { return *rm_; }
  const ReducedModel &reduced() const { return *rm_; }
  int threads() const { return threads_; }

  ChangeSummary apply_change(const GeometryModel &geom);
  // Enrichment to the configured tolerance (or the given one).
  ConvergenceLog enrich(bool with_oracle = false);
  ConvergenceLog enrich(double tol, bool with_oracle = false);
  ReducedSolution solve(double mu);
  Estimate estimate(const ReducedSolution &sol) const;
  // Full-order solution, cached per revision.
  const Vector &full_solution(double mu);
  double true_relative_error(const ReducedSolution &sol);

  // Patch indicators of the last enrichment state, per training parameter.
  const std::vector<std::vector<double>> &last_indicators() const { return indicators_; }

  void save(const std::filesystem::path &path) const;
  static std::unique_ptr<Session> load(const std::filesystem::path &path);
  std::string serialize() const;
  static std::unique_ptr<Session> deserialize(const std::string &bytes);

private:
  struct Restore
  {
  };
  Session(const GeometryModel &geom, SessionConfig cfg, Restore);
  void build_discretization(const GeometryModel &geom);
  void rebuild_faces(const std::vector<int> &faces);
  void rebuild_vertices(const std::vector<int> &vertices);
  void rebuild_cells(const std::vector<int> &cells);

  SessionConfig cfg_;
  int threads_ = 1;
  std::shared_ptr<const Mesh> mesh_;
  std::unique_ptr<AffineSystem> sys_;
  std::unique_ptr<Decomposition> dec_;
  std::unique_ptr<ExtensionOperator> ext_;
  SparseMatrix gram_;
  std::unique_ptr<Estimator> est_;
  std::unique_ptr<ReducedModel> rm_;
  std::unique_ptr<FullSolver> full_;
  std::map<double, Vector> full_cache_;
  std::vector<std::vector<double>> indicators_;
  SessionStats stats_;
};

struct SequenceResult
{
  std::vector<ConvergenceLog> logs;
  std::vector<ChangeSummary> changes;  // one per geometry after the first
  std::vector<SessionStats> stats;     // cumulative after each geometry
  std::vector<Index> reduced_dims;
};

// Runs the full pipeline over a geometry sequence. With ReusePolicy::none each geometry is
// an independent session.
SequenceResult run_sequence(const std::vector<GeometryModel> &geometries, const SessionConfig &cfg,
                            bool with_oracle = false);

}  // namespace arbilomod
