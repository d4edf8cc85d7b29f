// Copyright The arbilomod contributors.
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "arbilomod/service.hpp"
#include "arbilomod/session.hpp"

namespace py = pybind11;
using namespace arbilomod;

namespace
{

py::object to_python(const nlohmann::json &j)
{
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object &o)
{
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict estimate_dict(const Estimate &e)
{
  py::dict d;
  d["mu"] = e.mu;
  d["residual_norm"] = e.residual_norm;
  d["delta"] = e.delta;
  d["delta_loc"] = e.delta_loc;
  d["norm"] = e.norm;
  d["delta_rel"] = e.delta_rel ? py::cast(*e.delta_rel) : py::none();
  d["delta_rel_loc"] = e.delta_rel_loc ? py::cast(*e.delta_rel_loc) : py::none();
  d["indicators"] = e.indicators;
  return d;
}

py::dict log_dict(const ConvergenceLog &log)
{
  py::dict d;
  d["converged"] = log.converged;
  d["iterations"] = log.iterations;
  d["final_residual"] = log.final_residual();
  py::list recs;
  for (const IterationRecord &r : log.records)
  {
    py::dict x;
    x["iteration"] = r.iteration;
    x["mu"] = r.mu;
    x["residual_norm"] = r.residual_norm;
    x["delta_rel"] = r.delta_rel;
    x["delta_rel_loc"] = r.delta_rel_loc;
    x["true_rel_error"] = r.true_rel_error;
    x["reduced_dim"] = r.reduced_dim;
    recs.append(x);
  }
  d["records"] = recs;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
  m.doc() = "Localized reduced-basis engine";

  static py::exception<Error> error(m, "Error");
  static py::exception<InvalidArgument> invalid(m, "InvalidArgument", error.ptr());
  static py::exception<GeometryResolutionError> resolution(m, "GeometryResolutionError",
                                                           error.ptr());
  static py::exception<LoadError> load_error(m, "LoadError", error.ptr());
  static py::exception<ConditioningError> conditioning(m, "ConditioningError", error.ptr());
  static py::exception<StalenessError> staleness(m, "StalenessError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try
    {
      if (p)
        std::rethrow_exception(p);
    }
    catch (const InvalidArgument &e)
    {
      py::set_error(invalid, e.what());
    }
    catch (const GeometryResolutionError &e)
    {
      py::set_error(resolution, e.what());
    }
    catch (const LoadError &e)
    {
      py::set_error(load_error, e.what());
    }
    catch (const ConditioningError &e)
    {
      py::set_error(conditioning, e.what());
    }
    catch (const StalenessError &e)
    {
      py::set_error(staleness, e.what());
    }
    catch (const Error &e)
    {
      py::set_error(error, e.what());
    }
  });

  py::class_<GeometryModel>(m, "Geometry")
      .def(py::init<>())
      .def_static(
          "from_dict", [](const py::object &o) { return geometry_from_json(from_python(o)); })
      .def_static("benchmark", &benchmark_geometry, py::arg("k"))
      .def_static("load", [](const std::string &name) { return resolve_geometry(name); })
      .def("to_dict", [](const GeometryModel &g) { return to_python(to_json(g)); })
      .def("contains", &GeometryModel::contains)
      .def("area", &GeometryModel::area)
      .def("resolved_by", &GeometryModel::resolved_by)
      .def_readwrite("mu_min", &GeometryModel::mu_min)
      .def_readwrite("mu_max", &GeometryModel::mu_max)
      .def("__eq__", [](const GeometryModel &a, const GeometryModel &b) { return a == b; });

  m.def(
      "diff",
      [](const GeometryModel &a, const GeometryModel &b, int per_side) {
        const ChangeSet cs = diff(a, b, per_side);
        py::dict d;
        d["affected_domains"] = cs.affected_domains;
        d["changed_area"] = cs.changed_area();
        d["empty"] = cs.empty();
        return d;
      },
      py::arg("old"), py::arg("new"), py::arg("per_side") = 8);

  m.def(
      "dof_counts",
      [](int n, int per_side) {
        auto mesh = std::make_shared<Mesh>(build_mesh(n));
        AffineSystem sys(mesh, GeometryModel{}, per_side);
        Decomposition dec(*mesh, sys.dofs(), sys.grid());
        // Interior representatives: the cell at the centre and the face below it.
        const int mid = (per_side - 1) / 2;
        const int d = mid * per_side + mid;
        const int f = dec.find({d, d + per_side});
        py::dict out;
        out["global"] = mesh->num_nodes();
        out["free"] = sys.dofs().free_dofs.size();
        out["training_patch"] = dec.training_dofs(f).size() + dec.coupling_dofs(f).size();
        out["cell"] = dec.space(dec.cell_of_domain(d)).dofs.size();
        out["cells"] = dec.cells().size();
        out["faces"] = dec.faces().size();
        out["vertices"] = dec.vertices().size();
        return out;
      },
      py::arg("n") = 200, py::arg("per_side") = 8);

  m.def("alpha_lb", &alpha_lb_default, py::arg("mu"));
  m.def("alpha_lb_rigorous", &alpha_lb_rigorous, py::arg("mu"));
  m.def(
      "pu_stability_bound",
      [](int n, int per_side) {
        auto mesh = std::make_shared<Mesh>(build_mesh(n));
        AffineSystem sys(mesh, GeometryModel{}, per_side);
        Decomposition dec(*mesh, sys.dofs(), sys.grid());
        return pu_stability_bound(*mesh, sys.dofs(), dec, h1_gram(*mesh));
      },
      py::arg("n"), py::arg("per_side"));
  m.def(
      "mark",
      [](const std::vector<std::vector<double>> &ind, double fraction) {
        std::vector<std::tuple<int, int, double>> out;
        for (const MarkedPair &p : mark(ind, fraction))
          out.emplace_back(p.mu_index, p.patch, p.value);
        return out;
      },
      py::arg("indicators"), py::arg("fraction") = 0.5);

  py::class_<SessionConfig>(m, "Config")
      .def(py::init<>())
      .def_static("from_dict",
                  [](const py::object &o) { return SessionConfig::from_json(from_python(o)); })
      .def("to_dict", [](const SessionConfig &c) { return to_python(c.to_json()); })
      .def("validate", &SessionConfig::validate)
      .def_readwrite("n", &SessionConfig::n)
      .def_readwrite("per_side", &SessionConfig::per_side)
      .def_readwrite("mu_bar", &SessionConfig::mu_bar)
      .def_readwrite("use_training", &SessionConfig::use_training)
      .def_readwrite("eps_greedy", &SessionConfig::eps_greedy)
      .def_readwrite("alpha", &SessionConfig::alpha)
      .def_readwrite("c_pu", &SessionConfig::c_pu)
      .def_readwrite("threads", &SessionConfig::threads)
      .def_property(
          "samples", [](const SessionConfig &c) { return c.training.samples; },
          [](SessionConfig &c, int v) { c.training.samples = v; })
      .def_property(
          "eps_train", [](const SessionConfig &c) { return c.training.eps_train; },
          [](SessionConfig &c, double v) { c.training.eps_train = v; })
      .def_property(
          "seed", [](const SessionConfig &c) { return c.training.seed; },
          [](SessionConfig &c, std::uint64_t v) { c.training.seed = v; })
      .def_property(
          "xi", [](const SessionConfig &c) { return c.training.xi; },
          [](SessionConfig &c, std::vector<double> v) { c.training.xi = std::move(v); })
      .def_property(
          "tol", [](const SessionConfig &c) { return c.enrichment.tol; },
          [](SessionConfig &c, double v) { c.enrichment.tol = v; })
      .def_property(
          "fraction", [](const SessionConfig &c) { return c.enrichment.fraction; },
          [](SessionConfig &c, double v) { c.enrichment.fraction = v; })
      .def_property(
          "max_iter", [](const SessionConfig &c) { return c.enrichment.max_iter; },
          [](SessionConfig &c, int v) { c.enrichment.max_iter = v; })
      .def_property(
          "reuse", [](const SessionConfig &c) { return to_string(c.reuse); },
          [](SessionConfig &c, const std::string &v) { c.reuse = reuse_policy_from_string(v); });

  py::class_<Session>(m, "Session")
      .def(py::init<const GeometryModel &, SessionConfig>(), py::arg("geometry"),
           py::arg("config") = SessionConfig{}, py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("revision", &Session::revision)
      .def_property_readonly("geometry", &Session::geometry)
      .def_property_readonly("config", &Session::config)
      .def_property_readonly("reduced_dim", [](const Session &s) { return s.reduced().dim(); })
      .def_property_readonly("stats",
                             [](const Session &s) { return to_python(s.stats().to_json()); })
      .def("basis_sizes",
           [](const Session &s) {
             std::vector<int> out;
             for (int sp = 0; sp < s.decomposition().num_spaces(); ++sp)
               out.push_back(s.reduced().basis_size(sp));
             return out;
           })
      .def("apply_change",
           [](Session &s, const GeometryModel &g) {
             ChangeSummary sum;
             {
               py::gil_scoped_release release;
               sum = s.apply_change(g);
             }
             return to_python(sum.to_json());
           })
      .def(
          "enrich",
          [](Session &s, std::optional<double> tol, bool oracle) {
            ConvergenceLog log;
            {
              py::gil_scoped_release release;
              log = tol ? s.enrich(*tol, oracle) : s.enrich(oracle);
            }
            return log_dict(log);
          },
          py::arg("tol") = py::none(), py::arg("oracle") = false)
      .def(
          "solve",
          [](Session &s, double mu) {
            const ReducedSolution sol = s.solve(mu);
            py::dict d = estimate_dict(s.estimate(sol));
            d["field"] = sol.field;
            d["coefficients"] = sol.coefficients;
            return d;
          },
          py::arg("mu"))
      .def(
          "full_solution", [](Session &s, double mu) { return Vector(s.full_solution(mu)); },
          py::arg("mu"))
      .def(
          "relative_error",
          [](Session &s, double mu) { return s.true_relative_error(s.solve(mu)); },
          py::arg("mu"))
      .def(
          "lattice_field",
          [](Session &s, double mu) {
            const DecodedField f = decode_field(encode_field(s.system().mesh(), s.solve(mu).field));
            const Index side = static_cast<Index>(f.n) + 1;
            return Matrix(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                          Eigen::RowMajor>>(f.values.data(), side,
                                                                            side));
          },
          py::arg("mu"))
      .def("save", [](const Session &s, const std::filesystem::path &p) { s.save(p); })
      .def_static("load", [](const std::filesystem::path &p) { return Session::load(p); })
      .def("serialize",
           [](const Session &s) { return py::bytes(s.serialize()); })
      .def_static("deserialize",
                  [](const py::bytes &b) { return Session::deserialize(std::string(b)); });
}
