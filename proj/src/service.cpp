// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include "arbilomod/service.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <httplib.h>
#undef _res

namespace arbilomod
{

namespace
{

template <typename T>
void put_le(std::string &out, T value)
{
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char *>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string &in, std::size_t pos)
{
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

HttpReply error_reply(int status, const std::string &message)
{
  return {status, "application/json", nlohmann::json{{"error", message}}.dump()};
}

HttpReply json_reply(const nlohmann::json &j)
{
  return {200, "application/json", j.dump()};
}

std::string codim_name(Codim c)
{
  switch (c)
  {
  case Codim::cell:
    return "cell";
  case Codim::face:
    return "face";
  case Codim::vertex:
    return "vertex";
  }
  return "cell";
}

double parse_mu(const nlohmann::json &j)
{
  if (!j.is_number())
    throw InvalidArgument("mu must be a number");
  return j.get<double>();
}

nlohmann::json optional_json(const std::optional<double> &v)
{
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string encode_field(const Mesh &mesh, const Vector &field)
{
  const Index count = static_cast<Index>(mesh.n + 1) * (mesh.n + 1);
  if (field.size() < count)
    throw InvalidArgument("field does not match the mesh");
  const auto lattice = field.head(count);
  std::string out(kFieldMagic, sizeof(kFieldMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.n));
  put_le<float>(out, static_cast<float>(lattice.minCoeff()));
  put_le<float>(out, static_cast<float>(lattice.maxCoeff()));
  out.reserve(out.size() + static_cast<std::size_t>(count) * sizeof(double));
  for (int j = 0; j <= mesh.n; ++j)
    for (int i = 0; i <= mesh.n; ++i)
      put_le<double>(out, field[mesh.lattice(i, j)]);
  return out;
}

DecodedField decode_field(const std::string &bytes)
{
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kFieldMagic, sizeof(kFieldMagic)) != 0)
    throw InvalidArgument("not a field payload");
  DecodedField f;
  f.n = get_le<std::uint32_t>(bytes, 4);
  f.min = get_le<float>(bytes, 8);
  f.max = get_le<float>(bytes, 12);
  const std::size_t count = static_cast<std::size_t>(f.n + 1) * (f.n + 1);
  if (bytes.size() != 16 + count * sizeof(double))
    throw InvalidArgument("field payload has the wrong length");
  f.values.resize(count);
  for (std::size_t k = 0; k < count; ++k)
    f.values[k] = get_le<double>(bytes, 16 + k * sizeof(double));
  return f;
}

Service::Service(std::unique_ptr<Session> session) : session_(std::move(session))
{
  publish();
}

void Service::publish(std::map<double, std::string> fields)
{
  auto snap = std::make_shared<Snapshot>();
  const Session &s = *session_;
  nlohmann::json histogram = nlohmann::json::object();
  for (int sp = 0; sp < s.decomposition().num_spaces(); ++sp)
  {
    const std::string key = codim_name(s.decomposition().space(sp).codim);
    const std::string size = std::to_string(s.reduced().basis_size(sp));
    nlohmann::json &bucket = histogram[key];
    if (!bucket.is_object())
      bucket = nlohmann::json::object();
    bucket[size] = bucket.value(size, 0) + 1;
  }
  snap->status = {{"revision", s.revision()},
                  {"reduced_dim", s.reduced().dim()},
                  {"n", s.config().n},
                  {"domains_per_side", s.config().per_side},
                  {"mu_range", {s.geometry().mu_min, s.geometry().mu_max}},
                  {"geometry", to_json(s.geometry())},
                  {"basis_sizes", histogram},
                  {"cache", {{"hits", s.system().cache_hits()},
                             {"misses", s.system().cache_misses()}}},
                  {"stats", s.stats().to_json()}};
  snap->indicators = {{"mu", indicators_.empty() ? nlohmann::json(nullptr)
                                                 : nlohmann::json(indicators_mu_)},
                      {"patches_per_side", s.config().per_side - 1},
                      {"values", indicators_}};
  snap->fields = std::move(fields);
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(snap);
}

HttpReply Service::put_geometry(const std::string &body)
{
  std::unique_lock lock(mutate_, std::try_to_lock);
  if (!lock.owns_lock())
    return error_reply(409, "a solve or edit is in progress");
  GeometryModel geom;
  try
  {
    geom = geometry_from_json(nlohmann::json::parse(body));
    geom.validate();
  }
  catch (const nlohmann::json::exception &e)
  {
    return error_reply(400, std::string("malformed geometry document: ") + e.what());
  }
  catch (const InvalidArgument &e)
  {
    return error_reply(400, e.what());
  }
  try
  {
    const ChangeSummary sum = session_->apply_change(geom);
    if (!sum.change.empty())
      indicators_.clear();
    publish();
    nlohmann::json out = sum.to_json();
    out["invalidations"] = {{"trainings", sum.trainings_rerun},
                            {"greedys", sum.greedys_rerun},
                            {"vertices", sum.vertices.size()}};
    return json_reply(out);
  }
  catch (const GeometryResolutionError &e)
  {
    return error_reply(422, e.what());
  }
}

HttpReply Service::post_solve(const std::string &body)
{
  std::unique_lock lock(mutate_, std::try_to_lock);
  if (!lock.owns_lock())
    return error_reply(409, "a solve or edit is in progress");
  double mu = 0.0;
  double tol = session_->config().enrichment.tol;
  try
  {
    const nlohmann::json j = nlohmann::json::parse(body);
    if (!j.is_object() || !j.contains("mu"))
      throw InvalidArgument("body must be an object with field 'mu'");
    mu = parse_mu(j.at("mu"));
    if (j.contains("tol"))
    {
      if (!j.at("tol").is_number())
        throw InvalidArgument("tol must be a number");
      tol = j.at("tol").get<double>();
    }
    if (!(tol > 0.0))
      throw InvalidArgument("tol must be positive");
    session_->geometry().check_parameter(mu);
  }
  catch (const nlohmann::json::exception &e)
  {
    return error_reply(400, std::string("malformed body: ") + e.what());
  }
  catch (const InvalidArgument &e)
  {
    return error_reply(400, e.what());
  }
  try
  {
    const ConvergenceLog log = session_->enrich(tol);
    const ReducedSolution sol = session_->solve(mu);
    const Estimate est = session_->estimate(sol);
    indicators_ = est.indicators;
    indicators_mu_ = mu;
    std::map<double, std::string> fields;
    fields[mu] = encode_field(session_->system().mesh(), sol.field);
    publish(std::move(fields));
    return json_reply({{"mu", mu},
                       {"estimate_rel", optional_json(est.delta_rel_loc)},
                       {"estimate_rel_global", optional_json(est.delta_rel)},
                       {"residual_norm", est.residual_norm},
                       {"reduced_dim", session_->reduced().dim()},
                       {"iterations", log.iterations},
                       {"converged", log.converged},
                       {"revision", session_->revision()},
                       {"reuse_stats", session_->stats().to_json()}});
  }
  catch (const ConditioningError &e)
  {
    return error_reply(500, e.what());
  }
}

HttpReply Service::get_field(const std::string &mu_text)
{
  double mu = 0.0;
  try
  {
    std::size_t used = 0;
    mu = std::stod(mu_text, &used);
    if (used != mu_text.size())
      throw InvalidArgument("trailing characters");
    session_->geometry().check_parameter(mu);
  }
  catch (const std::exception &e)
  {
    return error_reply(400, std::string("invalid mu: ") + e.what());
  }
  std::unique_lock lock(mutate_, std::try_to_lock);
  if (!lock.owns_lock())
  {
    std::shared_ptr<const Snapshot> snap;
    {
      std::lock_guard g(snapshot_mutex_);
      snap = snapshot_;
    }
    const auto it = snap->fields.find(mu);
    if (it == snap->fields.end())
      return error_reply(409, "a solve is in progress and no snapshot exists for this mu");
    return {200, "application/octet-stream", it->second};
  }
  return {200, "application/octet-stream",
          encode_field(session_->system().mesh(), session_->solve(mu).field)};
}

HttpReply Service::get_indicators() const
{
  std::lock_guard g(snapshot_mutex_);
  return json_reply(snapshot_->indicators);
}

HttpReply Service::get_status() const
{
  std::lock_guard g(snapshot_mutex_);
  return json_reply(snapshot_->status);
}

struct HttpServer::Impl
{
  httplib::Server server;
};

namespace
{

void send(httplib::Response &res, const HttpReply &r)
{
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(Service &service) : impl_(std::make_unique<Impl>())
{
  auto &srv = impl_->server;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, PUT, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.Options(".*", [](const httplib::Request &, httplib::Response &res) { res.status = 204; });
  srv.Put("/geometry", [&service](const httplib::Request &req, httplib::Response &res) {
    send(res, service.put_geometry(req.body));
  });
  srv.Post("/solve", [&service](const httplib::Request &req, httplib::Response &res) {
    send(res, service.post_solve(req.body));
  });
  srv.Get("/field", [&service](const httplib::Request &req, httplib::Response &res) {
    if (!req.has_param("mu"))
    {
      send(res, error_reply(400, "missing query parameter 'mu'"));
      return;
    }
    send(res, service.get_field(req.get_param_value("mu")));
  });
  srv.Get("/indicators", [&service](const httplib::Request &, httplib::Response &res) {
    send(res, service.get_indicators());
  });
  srv.Get("/status", [&service](const httplib::Request &, httplib::Response &res) {
    send(res, service.get_status());
  });
  srv.set_exception_handler([](const httplib::Request &, httplib::Response &res,
                               std::exception_ptr ep) {
    try
    {
      std::rethrow_exception(ep);
    }
    catch (const InvalidArgument &e)
    {
      send(res, error_reply(400, e.what()));
    }
    catch (const std::exception &e)
    {
      send(res, error_reply(500, e.what()));
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string &host, int port)
{
  if (port == 0)
    return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port))
    throw InvalidArgument("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace arbilomod
