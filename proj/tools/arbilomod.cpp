// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "arbilomod/service.hpp"
#include "arbilomod/session.hpp"

using namespace arbilomod;
namespace fs = std::filesystem;

namespace
{

constexpr int kExitBadInput = 2;
constexpr int kExitNotConverged = 3;
constexpr int kCsvSchema = 1;

class NotConverged : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Options
{
  std::string geometry = "bench1";
  int n = 200;
  int domains = 8;
  std::uint64_t seed = 0;
  double eps_train = 1e-4;
  double eps_greedy = 1e-3;
  int samples = 60;
  double tol = 0.0;  // 0: no enrichment (solve) or the command default
  double fraction = 0.5;
  int max_iter = 200;
  std::string training = "on";
  std::string reuse = "on";
  std::string alpha = "closed-form";
  double c_pu = 1.0;
  bool oracle = false;
  int threads = 0;
  std::string out;
};

void add_common(CLI::App *cmd, Options &o)
{
  cmd->add_option("--geometry", o.geometry, "bench1..bench5 or a geometry JSON file");
  cmd->add_option("--n", o.n, "fine cells per side")->check(CLI::PositiveNumber);
  cmd->add_option("--domains", o.domains, "domains per side")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "training seed");
  cmd->add_option("--eps-train", o.eps_train, "training tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--eps-greedy", o.eps_greedy, "cell greedy tolerance")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--samples", o.samples, "random coupling samples per parameter")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", o.tol, "enrichment tolerance on the residual norm")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--fraction", o.fraction, "marking fraction")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--max-iter", o.max_iter, "enrichment iteration cap")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--training", o.training, "on|off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--reuse", o.reuse, "on (adjacent) | neighbourhood | off")
      ->check(CLI::IsMember({"on", "off", "adjacent", "neighbourhood", "none"}));
  cmd->add_option("--alpha", o.alpha, "coercivity bound: closed-form|rigorous")
      ->check(CLI::IsMember({"closed-form", "rigorous"}));
  cmd->add_option("--c-pu", o.c_pu, "partition stability constant in the localized estimate")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--oracle", o.oracle, "run full solves for true errors");
  cmd->add_option("--threads", o.threads, "worker threads (0: all cores)");
  cmd->add_option("--out", o.out, "output directory");
}

SessionConfig make_config(const Options &o)
{
  SessionConfig c;
  c.n = o.n;
  c.per_side = o.domains;
  c.training.seed = o.seed;
  c.training.eps_train = o.eps_train;
  c.training.samples = o.samples;
  c.eps_greedy = o.eps_greedy;
  c.use_training = o.training == "on";
  c.enrichment.fraction = o.fraction;
  c.enrichment.max_iter = o.max_iter;
  if (o.tol > 0.0)
    c.enrichment.tol = o.tol;
  c.alpha = o.alpha;
  c.c_pu = o.c_pu;
  c.reuse = reuse_policy_from_string(o.reuse);
  c.threads = o.threads;
  c.validate();
  return c;
}

std::optional<fs::path> out_dir(const Options &o)
{
  if (o.out.empty())
    return std::nullopt;
  fs::create_directories(o.out);
  return fs::path(o.out);
}

void write_manifest(const fs::path &dir, const std::string &command, const SessionConfig &cfg,
                    const nlohmann::json &extra = {})
{
  nlohmann::json m{{"command", command}, {"csv_schema", kCsvSchema}, {"config", cfg.to_json()}};
  if (!extra.is_null())
    m["results"] = extra;
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

std::string fmt(double v)
{
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

nlohmann::json opt_json(const std::optional<double> &v)
{
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

double max_relative_error(Session &s, const std::vector<double> &mus)
{
  double worst = 0.0;
  for (double mu : mus)
    worst = std::max(worst, s.true_relative_error(s.solve(mu)));
  return worst;
}

void require_converged(const ConvergenceLog &log, const std::string &what)
{
  if (!log.converged)
    throw NotConverged(what + " did not reach the tolerance (final residual " +
                       fmt(log.final_residual()) + ")");
}

int cmd_solve(const Options &o, double mu)
{
  const SessionConfig cfg = make_config(o);
  const GeometryModel geom = resolve_geometry(o.geometry);
  geom.check_parameter(mu);
  geom.check_resolved(cfg.n);
  const auto t0 = Clock::now();
  Session s(geom, cfg);
  const double t_setup = seconds_since(t0);
  std::optional<ConvergenceLog> log;
  if (o.tol > 0.0)
    log = s.enrich(o.oracle);
  const ReducedSolution sol = s.solve(mu);
  const Estimate est = s.estimate(sol);
  nlohmann::json report{{"mu", mu},
                        {"reduced_dim", s.reduced().dim()},
                        {"residual_norm", est.residual_norm},
                        {"delta_rel", opt_json(est.delta_rel)},
                        {"delta_rel_loc", opt_json(est.delta_rel_loc)},
                        {"setup_seconds", t_setup},
                        {"stats", s.stats().to_json()}};
  if (log)
  {
    report["iterations"] = log->iterations;
    report["converged"] = log->converged;
  }
  if (o.oracle)
    report["relative_error"] = s.true_relative_error(sol);
  std::cout << report.dump(2) << '\n';
  if (auto dir = out_dir(o))
  {
    write_manifest(*dir, "solve", cfg, report);
    std::ofstream(*dir / "field.bin", std::ios::binary)
        << encode_field(s.system().mesh(), sol.field);
    if (log)
    {
      std::ofstream csv(*dir / "convergence.csv");
      log->write_csv(csv);
    }
    s.save(*dir / "session.alm");
  }
  if (log)
    require_converged(*log, "enrichment");
  return 0;
}

int cmd_sequence(Options o)
{
  if (o.tol <= 0.0)
    o.tol = 1e-4;
  const SessionConfig cfg = make_config(o);
  std::vector<GeometryModel> geoms;
  for (int k = 1; k <= 5; ++k)
    geoms.push_back(benchmark_geometry(k));
  const auto t0 = Clock::now();
  const SequenceResult r = run_sequence(geoms, cfg, o.oracle);
  const double elapsed = seconds_since(t0);

  std::ostringstream table;
  table << "geometry,training,reuse,iterations,converged,reduced_dim,final_residual,"
           "faces_invalidated,cells_invalidated,trainings_run,greedys_run\n";
  bool all_converged = true;
  for (std::size_t k = 0; k < r.logs.size(); ++k)
  {
    const bool first = k == 0;
    const ChangeSummary *ch = first ? nullptr : &r.changes[k - 1];
    table << k + 1 << ',' << o.training << ',' << to_string(cfg.reuse) << ','
          << r.logs[k].iterations << ',' << (r.logs[k].converged ? 1 : 0) << ','
          << r.reduced_dims[k] << ',' << fmt(r.logs[k].final_residual()) << ','
          << (ch ? ch->faces.size() : 0) << ',' << (ch ? ch->cells.size() : 0) << ','
          << r.stats[k].trainings_run << ',' << r.stats[k].greedys_run << '\n';
    all_converged = all_converged && r.logs[k].converged;
  }
  std::cout << table.str();
  std::cerr << "elapsed " << fmt(elapsed) << " s\n";
  if (auto dir = out_dir(o))
  {
    write_manifest(*dir, "sequence", cfg, {{"seconds", elapsed}});
    std::ofstream(*dir / "sequence.csv") << table.str();
    for (std::size_t k = 0; k < r.logs.size(); ++k)
    {
      std::ofstream csv(*dir / ("convergence_geometry" + std::to_string(k + 1) + ".csv"));
      r.logs[k].write_csv(csv);
    }
  }
  if (!all_converged)
    throw NotConverged("enrichment did not converge for every geometry");
  return 0;
}

std::vector<double> parse_list(const std::string &text)
{
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
  {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size())
      throw InvalidArgument("bad list entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty())
    throw InvalidArgument("empty list");
  return out;
}

int cmd_tolerance_sweep(const Options &o, const std::string &train_list,
                        const std::string &greedy_list)
{
  const GeometryModel geom = resolve_geometry(o.geometry);
  std::ostringstream table;
  table << "eps_train,eps_greedy,reduced_dim,max_relative_error,face_dim,cell_dim\n";
  SessionConfig cfg;
  for (double et : parse_list(train_list))
    for (double eg : parse_list(greedy_list))
    {
      Options oo = o;
      oo.eps_train = et;
      oo.eps_greedy = eg;
      cfg = make_config(oo);
      Session s(geom, cfg);
      Index faces = 0, cells = 0;
      for (int f : s.decomposition().faces())
        faces += s.reduced().basis_size(f);
      for (int c : s.decomposition().cells())
        cells += s.reduced().basis_size(c);
      const double err = max_relative_error(s, cfg.training.xi);
      table << fmt(et) << ',' << fmt(eg) << ',' << s.reduced().dim() << ',' << fmt(err) << ','
            << faces << ',' << cells << '\n';
      std::cout << table.str().substr(table.str().rfind('\n', table.str().size() - 2) + 1)
                << std::flush;
    }
  if (auto dir = out_dir(o))
  {
    write_manifest(*dir, "tolerance-sweep", cfg);
    std::ofstream(*dir / "tolerance_sweep.csv") << table.str();
  }
  return 0;
}

int cmd_estimator_performance(Options o)
{
  if (o.tol <= 0.0)
    o.tol = 1e-4;
  const SessionConfig cfg = make_config(o);
  Session s(resolve_geometry(o.geometry), cfg);
  const ConvergenceLog log = s.enrich(true);
  std::ostringstream csv;
  log.write_csv(csv);
  std::cout << csv.str();
  if (auto dir = out_dir(o))
  {
    write_manifest(*dir, "estimator-performance", cfg);
    std::ofstream(*dir / "estimator_performance.csv") << csv.str();
  }
  require_converged(log, "enrichment");
  return 0;
}

int cmd_timings(const Options &o, const std::string &n_list)
{
  std::ostringstream table;
  table << "n,global_dofs,training_patch_dofs,cell_dofs,setup_s,training_s,greedy_s,"
           "reduced_dim,reduced_solve_s,full_solve_s,max_relative_error\n";
  SessionConfig cfg;
  for (double nv : parse_list(n_list))
  {
    Options oo = o;
    oo.n = static_cast<int>(nv);
    cfg = make_config(oo);
    const GeometryModel geom = resolve_geometry(o.geometry);
    geom.check_resolved(cfg.n);
    const int threads = cfg.threads > 0 ? cfg.threads : default_thread_count();

    auto t = Clock::now();
    auto mesh = std::make_shared<Mesh>(build_mesh(cfg.n));
    AffineSystem sys(mesh, geom, cfg.per_side);
    Decomposition dec(*mesh, sys.dofs(), sys.grid());
    ExtensionOperator ext(sys, dec, cfg.mu_bar);
    const SparseMatrix gram = h1_gram(*mesh);
    const double t_setup = seconds_since(t);

    t = Clock::now();
    std::vector<Matrix> bases(dec.num_spaces());
    parallel_for(dec.faces().size(), threads, [&](std::size_t i) {
      const int f = dec.faces()[i];
      bases[f] = train_face(f, cfg.training, sys, dec, ext, gram).vectors;
    });
    for (int v : dec.vertices())
      bases[v] = vertex_basis(v, dec, ext, gram).vectors;
    const double t_train = seconds_since(t);

    t = Clock::now();
    const CellGreedyConfig gcfg = cfg.greedy_config();
    parallel_for(dec.cells().size(), threads, [&](std::size_t i) {
      const int c = dec.cells()[i];
      bases[c] = local_greedy(c, gcfg, bases, sys, dec, gram).basis.vectors;
    });
    const double t_greedy = seconds_since(t);

    ReducedModel rm(sys, dec);
    for (int sp = 0; sp < dec.num_spaces(); ++sp)
      rm.set_basis(sp, bases[sp], sys.revision());
    rm.assemble(threads);
    Estimator est(sys, dec, gram);
    FullSolver full(sys);
    double t_red = 0.0, t_full = 0.0, worst = 0.0;
    for (double mu : cfg.training.xi)
    {
      t = Clock::now();
      const ReducedSolution sol = rm.solve(mu);
      t_red += seconds_since(t);
      t = Clock::now();
      const Vector u = full.solve(mu);
      t_full += seconds_since(t);
      worst = std::max(worst, est.norm(u - sol.field) / est.norm(u));
    }
    const double q = static_cast<double>(cfg.training.xi.size());
    const int mid = (cfg.per_side - 1) / 2;
    const int centre = mid * cfg.per_side + mid;
    const int face = dec.find({centre, centre + cfg.per_side});
    table << cfg.n << ',' << mesh->num_nodes() << ','
          << dec.training_dofs(face).size() + dec.coupling_dofs(face).size() << ','
          << dec.space(dec.cell_of_domain(centre)).dofs.size() << ',' << fmt(t_setup) << ','
          << fmt(t_train) << ',' << fmt(t_greedy) << ',' << rm.dim() << ',' << fmt(t_red / q)
          << ',' << fmt(t_full / q) << ',' << fmt(worst) << '\n';
  }
  std::cout << table.str();
  if (auto dir = out_dir(o))
  {
    write_manifest(*dir, "timings", cfg);
    std::ofstream(*dir / "timings.csv") << table.str();
  }
  return 0;
}

int cmd_h_study(const Options &o, const std::string &inverse_h)
{
  const GeometryModel geom = resolve_geometry(o.geometry);
  std::ostringstream table;
  table << "inverse_h,domains,reduced_dim,face_dim,cell_dim,vertex_dim,seconds";
  if (o.oracle)
    table << ",max_relative_error";
  table << '\n';
  std::cout << table.str() << std::flush;
  SessionConfig cfg;
  for (double h : parse_list(inverse_h))
  {
    Options oo = o;
    oo.domains = static_cast<int>(h);
    cfg = make_config(oo);
    const auto t0 = Clock::now();
    Session s(geom, cfg);
    const double secs = seconds_since(t0);
    Index faces = 0, cells = 0, verts = 0;
    for (int f : s.decomposition().faces())
      faces += s.reduced().basis_size(f);
    for (int c : s.decomposition().cells())
      cells += s.reduced().basis_size(c);
    for (int v : s.decomposition().vertices())
      verts += s.reduced().basis_size(v);
    std::ostringstream row;
    row << oo.domains << ',' << oo.domains * oo.domains << ',' << s.reduced().dim() << ','
        << faces << ',' << cells << ',' << verts << ',' << fmt(secs);
    if (o.oracle)
      row << ',' << fmt(max_relative_error(s, cfg.training.xi));
    row << '\n';
    table << row.str();
    std::cout << row.str() << std::flush;
  }
  if (auto dir = out_dir(o))
  {
    write_manifest(*dir, "h-study", cfg);
    std::ofstream(*dir / "h_study.csv") << table.str();
  }
  return 0;
}

HttpServer *g_server = nullptr;

void on_signal(int)
{
  if (g_server)
    g_server->stop();
}

int cmd_serve(const Options &o, const std::string &host, int port, const std::string &load)
{
  std::unique_ptr<Session> s;
  if (!load.empty())
    s = Session::load(load);
  else
    s = std::make_unique<Session>(resolve_geometry(o.geometry), make_config(o));
  Service svc(std::move(s));
  HttpServer server(svc);
  const int bound = server.bind(host, port);
  std::cout << "listening on http://" << host << ':' << bound << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Localized reduced-basis solver for high-contrast elliptic problems"};
  app.require_subcommand(1);
  Options o;

  double mu = 1e5;
  auto *solve = app.add_subcommand("solve", "build the reduced model and solve at one parameter");
  add_common(solve, o);
  solve->add_option("--mu", mu, "parameter value");

  auto *sequence = app.add_subcommand("sequence", "geometry sequence with enrichment and reuse");
  add_common(sequence, o);

  std::string train_list = "1e-2,1e-3,1e-4", greedy_list = "1e-2,1e-3,1e-4";
  auto *sweep = app.add_subcommand("tolerance-sweep", "accuracy over training tolerances");
  add_common(sweep, o);
  sweep->add_option("--eps-train-list", train_list, "comma-separated training tolerances");
  sweep->add_option("--eps-greedy-list", greedy_list, "comma-separated greedy tolerances");

  auto *perf = app.add_subcommand("estimator-performance",
                                  "estimators and true errors over enrichment iterations");
  add_common(perf, o);

  std::string n_list = "200";
  auto *timings = app.add_subcommand("timings", "wall times and dimensions per mesh size");
  add_common(timings, o);
  timings->add_option("--n-list", n_list, "comma-separated mesh sizes");

  std::string inverse_h = "4,5,8,10,20";
  auto *hstudy = app.add_subcommand("h-study", "reduced dimension over the domain size");
  add_common(hstudy, o);
  hstudy->add_option("--inverse-h", inverse_h, "comma-separated domains per side");

  std::string host = "127.0.0.1", load;
  int port = 8080;
  auto *serve = app.add_subcommand("serve", "HTTP service for interactive editing");
  add_common(serve, o);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0: any free port)");
  serve->add_option("--load", load, "start from a saved session file");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  try
  {
    if (*solve)
      return cmd_solve(o, mu);
    if (*sequence)
      return cmd_sequence(o);
    if (*sweep)
      return cmd_tolerance_sweep(o, train_list, greedy_list);
    if (*perf)
      return cmd_estimator_performance(o);
    if (*timings)
      return cmd_timings(o, n_list);
    if (*hstudy)
      return cmd_h_study(o, inverse_h);
    if (*serve)
      return cmd_serve(o, host, port, load);
  }
  catch (const NotConverged &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNotConverged;
  }
  catch (const InvalidArgument &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
  catch (const GeometryResolutionError &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
  catch (const LoadError &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
  catch (const std::invalid_argument &e)
  {
    std::cerr << "error: bad number: " << e.what() << '\n';
    return kExitBadInput;
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
