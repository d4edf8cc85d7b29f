// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/session.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace arbilomod
{

namespace
{

constexpr char kMagic[8] = {'A', 'L', 'M', 'S', 'E', 'S', 'S', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put_le(std::string &out, T value)
{
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string &in, std::size_t &pos)
{
  if (pos + sizeof(T) > in.size())
    throw LoadError("session file is truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

ReusePolicy reuse_policy_from_string(const std::string &s)
{
  if (s == "none" || s == "off")
    return ReusePolicy::none;
  if (s == "neighbourhood")
    return ReusePolicy::neighbourhood;
  if (s == "adjacent" || s == "on")
    return ReusePolicy::adjacent;
  throw InvalidArgument("unknown reuse policy '" + s + "'");
}

std::string to_string(ReusePolicy p)
{
  switch (p)
  {
  case ReusePolicy::none:
    return "none";
  case ReusePolicy::neighbourhood:
    return "neighbourhood";
  case ReusePolicy::adjacent:
    return "adjacent";
  }
  return "none";
}

Invalidation invalidated_spaces(const Decomposition &dec, const std::vector<int> &affected,
                                ReusePolicy policy)
{
  Invalidation inv;
  const std::set<int> hit(affected.begin(), affected.end());
  auto meets = [&](const std::vector<int> &domains) {
    return std::any_of(domains.begin(), domains.end(), [&](int d) { return hit.count(d) > 0; });
  };
  if (policy == ReusePolicy::none)
  {
    inv.faces = dec.faces();
    inv.vertices = dec.vertices();
    inv.cells = dec.cells();
    return inv;
  }
  for (int f : dec.faces())
    if (policy == ReusePolicy::neighbourhood ? meets(dec.neighbourhood(f))
                                             : meets(dec.space(f).xi))
      inv.faces.push_back(f);
  for (int v : dec.vertices())
    if (meets(dec.space(v).xi))
      inv.vertices.push_back(v);
  std::set<int> domains(hit);
  for (const auto *list : {&inv.faces, &inv.vertices})
    for (int s : *list)
      domains.insert(dec.space(s).xi.begin(), dec.space(s).xi.end());
  for (int c : dec.cells())
    if (domains.count(dec.space(c).xi[0]))
      inv.cells.push_back(c);
  return inv;
}

void SessionConfig::validate() const
{
  if (n <= 0)
    throw InvalidArgument("n must be positive");
  if (per_side <= 0 || n % per_side != 0)
    throw InvalidArgument("the number of domains per side must divide n");
  if (!(mu_bar > 0.0))
    throw InvalidArgument("extension parameter must be positive");
  training.validate();
  enrichment.validate();
  greedy_config().validate();
  if (!(c_pu > 0.0))
    throw InvalidArgument("c_pu must be positive");
}

std::function<double(double)> SessionConfig::alpha_function() const
{
  if (alpha == "closed-form")
    return alpha_lb_default;
  if (alpha == "rigorous")
    return alpha_lb_rigorous;
  throw InvalidArgument("unknown coercivity bound '" + alpha + "'");
}

CellGreedyConfig SessionConfig::greedy_config() const
{
  CellGreedyConfig g;
  g.eps_greedy = eps_greedy;
  g.xi = training.xi;
  g.alpha_lb = alpha_function();
  return g;
}

EstimatorConstants SessionConfig::estimator_constants() const
{
  EstimatorConstants c;
  c.alpha_lb = alpha_function();
  c.c_pu = c_pu;
  return c;
}

nlohmann::json SessionConfig::to_json() const
{
  return {{"n", n},
          {"per_side", per_side},
          {"mu_bar", mu_bar},
          {"samples", training.samples},
          {"eps_train", training.eps_train},
          {"xi", training.xi},
          {"seed", training.seed},
          {"use_training", use_training},
          {"eps_greedy", eps_greedy},
          {"fraction", enrichment.fraction},
          {"tol", enrichment.tol},
          {"max_iter", enrichment.max_iter},
          {"alpha", alpha},
          {"c_pu", c_pu},
          {"reuse", to_string(reuse)}};
}

SessionConfig SessionConfig::from_json(const nlohmann::json &j)
{
  SessionConfig c;
  try
  {
    c.n = j.at("n").get<int>();
    c.per_side = j.at("per_side").get<int>();
    c.mu_bar = j.at("mu_bar").get<double>();
    c.training.samples = j.at("samples").get<int>();
    c.training.eps_train = j.at("eps_train").get<double>();
    c.training.xi = j.at("xi").get<std::vector<double>>();
    c.training.seed = j.at("seed").get<std::uint64_t>();
    c.use_training = j.at("use_training").get<bool>();
    c.eps_greedy = j.at("eps_greedy").get<double>();
    c.enrichment.fraction = j.at("fraction").get<double>();
    c.enrichment.tol = j.at("tol").get<double>();
    c.enrichment.max_iter = j.at("max_iter").get<int>();
    c.alpha = j.at("alpha").get<std::string>();
    c.c_pu = j.at("c_pu").get<double>();
    c.reuse = reuse_policy_from_string(j.at("reuse").get<std::string>());
  }
  catch (const nlohmann::json::exception &e)
  {
    throw LoadError(std::string("invalid session configuration: ") + e.what());
  }
  return c;
}

nlohmann::json SessionStats::to_json() const
{
  return {{"trainings_run", trainings_run},
          {"trainings_skipped", trainings_skipped},
          {"greedys_run", greedys_run},
          {"greedys_skipped", greedys_skipped},
          {"vertex_builds", vertex_builds},
          {"enrichment_iterations", enrichment_iterations},
          {"enrichment_greedys", enrichment_greedys}};
}

SessionStats SessionStats::from_json(const nlohmann::json &j)
{
  SessionStats s;
  s.trainings_run = j.at("trainings_run").get<int>();
  s.trainings_skipped = j.at("trainings_skipped").get<int>();
  s.greedys_run = j.at("greedys_run").get<int>();
  s.greedys_skipped = j.at("greedys_skipped").get<int>();
  s.vertex_builds = j.at("vertex_builds").get<int>();
  s.enrichment_iterations = j.at("enrichment_iterations").get<int>();
  s.enrichment_greedys = j.at("enrichment_greedys").get<int>();
  return s;
}

nlohmann::json ChangeSummary::to_json() const
{
  auto rects = [](const std::vector<Rect> &rs) {
    nlohmann::json a = nlohmann::json::array();
    for (const Rect &r : rs)
      a.push_back({r.ux0(), r.uy0(), r.ux1(), r.uy1()});
    return a;
  };
  return {{"revision", revision},
          {"added", rects(change.added)},
          {"removed", rects(change.removed)},
          {"affected_domains", change.affected_domains},
          {"invalidated", {{"faces", faces.size()}, {"vertices", vertices.size()},
                           {"cells", cells.size()}}},
          {"trainings", trainings_rerun},
          {"greedys", greedys_rerun},
          {"domains_reassembled", domains_reassembled}};
}

Session::Session(const GeometryModel &geom, SessionConfig cfg, Restore) : cfg_(std::move(cfg))
{
  cfg_.validate();
  threads_ = cfg_.threads > 0 ? cfg_.threads : default_thread_count();
  build_discretization(geom);
}

Session::Session(const GeometryModel &geom, SessionConfig cfg)
  : Session(geom, std::move(cfg), Restore{})
{
  rebuild_faces(dec_->faces());
  rebuild_vertices(dec_->vertices());
  rebuild_cells(dec_->cells());
  rm_->assemble(threads_);
}

Session::~Session() = default;

void Session::build_discretization(const GeometryModel &geom)
{
  geom.validate();
  geom.check_resolved(cfg_.n);
  mesh_ = std::make_shared<Mesh>(build_mesh(cfg_.n));
  sys_ = std::make_unique<AffineSystem>(mesh_, geom, cfg_.per_side);
  dec_ = std::make_unique<Decomposition>(*mesh_, sys_->dofs(), sys_->grid());
  ext_ = std::make_unique<ExtensionOperator>(*sys_, *dec_, cfg_.mu_bar);
  gram_ = h1_gram(*mesh_);
  est_ = std::make_unique<Estimator>(*sys_, *dec_, gram_, cfg_.estimator_constants(), threads_);
  rm_ = std::make_unique<ReducedModel>(*sys_, *dec_);
}

void Session::rebuild_faces(const std::vector<int> &faces)
{
  std::vector<Matrix> out(faces.size());
  if (cfg_.use_training)
  {
    parallel_for(faces.size(), threads_, [&](std::size_t i) {
      out[i] = train_face(faces[i], cfg_.training, *sys_, *dec_, *ext_, gram_).vectors;
    });
    stats_.trainings_run += static_cast<int>(faces.size());
  }
  else
    for (std::size_t i = 0; i < faces.size(); ++i)
      out[i].resize(static_cast<Index>(dec_->space(faces[i]).footprint.size()), 0);
  for (std::size_t i = 0; i < faces.size(); ++i)
    rm_->set_basis(faces[i], std::move(out[i]), sys_->revision());
}

void Session::rebuild_vertices(const std::vector<int> &vertices)
{
  for (int v : vertices)
    rm_->set_basis(v, vertex_basis(v, *dec_, *ext_, gram_).vectors, sys_->revision());
  stats_.vertex_builds += static_cast<int>(vertices.size());
}

void Session::rebuild_cells(const std::vector<int> &cells)
{
  const CellGreedyConfig gcfg = cfg_.greedy_config();
  std::vector<Matrix> out(cells.size());
  const std::vector<Matrix> &bases = rm_->bases();
  parallel_for(cells.size(), threads_, [&](std::size_t i) {
    out[i] = local_greedy(cells[i], gcfg, bases, *sys_, *dec_, gram_).basis.vectors;
  });
  for (std::size_t i = 0; i < cells.size(); ++i)
    rm_->set_basis(cells[i], std::move(out[i]), sys_->revision());
  stats_.greedys_run += static_cast<int>(cells.size());
}

ChangeSummary Session::apply_change(const GeometryModel &geom)
{
  geom.validate();
  geom.check_resolved(cfg_.n);
  ChangeSummary sum;
  sum.change = diff(sys_->geometry(), geom, cfg_.per_side);
  if (sum.change.empty())
  {
    sum.revision = sys_->revision();
    return sum;
  }
  sum.domains_reassembled = sys_->update_geometry(geom, sum.change.affected_domains);
  sum.revision = sys_->revision();
  ext_->update(sum.change.affected_domains);
  full_.reset();
  full_cache_.clear();
  indicators_.clear();

  const Invalidation inv = invalidated_spaces(*dec_, sum.change.affected_domains, cfg_.reuse);
  sum.faces = inv.faces;
  sum.vertices = inv.vertices;
  sum.cells = inv.cells;
  rm_->retag(sys_->revision());
  for (const auto *list : {&inv.faces, &inv.vertices, &inv.cells})
    for (int s : *list)
      rm_->clear_basis(s);
  const int trainings_before = stats_.trainings_run;
  rebuild_faces(inv.faces);
  rebuild_vertices(inv.vertices);
  rebuild_cells(inv.cells);
  sum.trainings_rerun = stats_.trainings_run - trainings_before;
  sum.greedys_rerun = static_cast<int>(inv.cells.size());
  if (cfg_.use_training)
    stats_.trainings_skipped += static_cast<int>(dec_->faces().size() - inv.faces.size());
  stats_.greedys_skipped += static_cast<int>(dec_->cells().size() - inv.cells.size());
  rm_->assemble(threads_);
  return sum;
}

ConvergenceLog Session::enrich(bool with_oracle)
{
  return enrich(cfg_.enrichment.tol, with_oracle);
}

ConvergenceLog Session::enrich(double tol, bool with_oracle)
{
  EnrichmentConfig ecfg = cfg_.enrichment;
  ecfg.tol = tol;
  Enricher enricher(ModelContext{*sys_, *dec_, *ext_, gram_, *est_, *rm_, cfg_.greedy_config(),
                                 cfg_.training.xi, threads_},
                    ecfg);
  std::function<Vector(double)> oracle;
  if (with_oracle)
    oracle = [this](double mu) { return full_solution(mu); };
  ConvergenceLog log = enricher.run(oracle);
  indicators_ = enricher.last_indicators();
  stats_.enrichment_iterations += log.iterations;
  stats_.enrichment_greedys += enricher.greedy_runs();
  return log;
}

ReducedSolution Session::solve(double mu)
{
  if (!rm_->assembled())
    rm_->assemble(threads_);
  return rm_->solve(mu);
}

Estimate Session::estimate(const ReducedSolution &sol) const
{
  return est_->estimate(sol.field, sol.mu);
}

const Vector &Session::full_solution(double mu)
{
  auto it = full_cache_.find(mu);
  if (it != full_cache_.end())
    return it->second;
  if (!full_)
    full_ = std::make_unique<FullSolver>(*sys_);
  return full_cache_.emplace(mu, full_->solve(mu)).first->second;
}

double Session::true_relative_error(const ReducedSolution &sol)
{
  const Vector &u = full_solution(sol.mu);
  return est_->norm(u - sol.field) / est_->norm(u);
}

std::string Session::serialize() const
{
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["revision"] = sys_->revision();
  manifest["seed"] = cfg_.training.seed;
  manifest["config"] = cfg_.to_json();
  manifest["geometry"] = to_json(sys_->geometry());
  manifest["stats"] = stats_.to_json();
  nlohmann::json table = nlohmann::json::array();
  for (int s = 0; s < dec_->num_spaces(); ++s)
  {
    const Matrix &b = rm_->basis(s);
    table.push_back({s, b.rows(), b.cols(), rm_->basis_revision(s)});
  }
  manifest["bases"] = table;
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (int s = 0; s < dec_->num_spaces(); ++s)
  {
    const Matrix &b = rm_->basis(s);
    for (Index k = 0; k < b.size(); ++k)
      put_le<double>(out, b.data()[k]);
  }
  return out;
}

std::unique_ptr<Session> Session::deserialize(const std::string &bytes)
{
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw LoadError("not a session file (bad magic header)");
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kFormatVersion)
    throw LoadError("unsupported session format version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size())
    throw LoadError("session manifest is truncated");
  nlohmann::json manifest;
  try
  {
    manifest = nlohmann::json::parse(bytes.substr(pos, len));
  }
  catch (const nlohmann::json::exception &e)
  {
    throw LoadError(std::string("malformed session manifest: ") + e.what());
  }
  pos += len;
  std::unique_ptr<Session> s;
  try
  {
    const SessionConfig cfg = SessionConfig::from_json(manifest.at("config"));
    const GeometryModel geom = geometry_from_json(manifest.at("geometry"));
    s.reset(new Session(geom, cfg, Restore{}));
    s->sys_->set_revision(manifest.at("revision").get<int>());
    s->stats_ = SessionStats::from_json(manifest.at("stats"));
    const auto &table = manifest.at("bases");
    if (static_cast<int>(table.size()) != s->dec_->num_spaces())
      throw LoadError("session basis table does not match the decomposition");
    for (const auto &row : table)
    {
      const int sp = row.at(0).get<int>();
      const Index rows = row.at(1).get<Index>();
      const Index cols = row.at(2).get<Index>();
      const int rev = row.at(3).get<int>();
      if (sp < 0 || sp >= s->dec_->num_spaces() ||
          rows != static_cast<Index>(s->dec_->space(sp).footprint.size()) || cols < 0)
        throw LoadError("session basis table entry is inconsistent");
      Matrix b(rows, cols);
      for (Index k = 0; k < b.size(); ++k)
        b.data()[k] = get_le<double>(bytes, pos);
      s->rm_->set_basis(sp, std::move(b), rev);
    }
  }
  catch (const nlohmann::json::exception &e)
  {
    throw LoadError(std::string("invalid session manifest: ") + e.what());
  }
  catch (const InvalidArgument &e)
  {
    throw LoadError(std::string("invalid session content: ") + e.what());
  }
  if (pos != bytes.size())
    throw LoadError("trailing data after session payload");
  s->rm_->assemble(s->threads_);
  return s;
}

void Session::save(const std::filesystem::path &path) const
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InvalidArgument("cannot write session file " + path.string());
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::unique_ptr<Session> Session::load(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw LoadError("cannot open session file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

SequenceResult run_sequence(const std::vector<GeometryModel> &geometries, const SessionConfig &cfg,
                            bool with_oracle)
{
  SequenceResult res;
  std::unique_ptr<Session> s;
  SessionStats total;
  for (std::size_t k = 0; k < geometries.size(); ++k)
  {
    if (!s || cfg.reuse == ReusePolicy::none)
    {
      if (s)
      {
        ChangeSummary sum;
        sum.change = diff(s->geometry(), geometries[k], cfg.per_side);
        sum.faces = s->decomposition().faces();
        sum.vertices = s->decomposition().vertices();
        sum.cells = s->decomposition().cells();
        sum.trainings_rerun = cfg.use_training ? static_cast<int>(sum.faces.size()) : 0;
        sum.greedys_rerun = static_cast<int>(sum.cells.size());
        res.changes.push_back(sum);
      }
      // Stats of earlier independent sessions are carried over.
      const SessionStats before = s ? s->stats() : SessionStats{};
      total.trainings_run += before.trainings_run;
      total.trainings_skipped += before.trainings_skipped;
      total.greedys_run += before.greedys_run;
      total.greedys_skipped += before.greedys_skipped;
      total.vertex_builds += before.vertex_builds;
      total.enrichment_iterations += before.enrichment_iterations;
      total.enrichment_greedys += before.enrichment_greedys;
      s.reset();
      s = std::make_unique<Session>(geometries[k], cfg);
    }
    else
      res.changes.push_back(s->apply_change(geometries[k]));
    res.logs.push_back(s->enrich(with_oracle));
    res.reduced_dims.push_back(s->reduced().dim());
    SessionStats now = s->stats();
    now.trainings_run += total.trainings_run;
    now.trainings_skipped += total.trainings_skipped;
    now.greedys_run += total.greedys_run;
    now.greedys_skipped += total.greedys_skipped;
    now.vertex_builds += total.vertex_builds;
    now.enrichment_iterations += total.enrichment_iterations;
    now.enrichment_greedys += total.enrichment_greedys;
    res.stats.push_back(now);
  }
  return res;
}

}  // namespace arbilomod
