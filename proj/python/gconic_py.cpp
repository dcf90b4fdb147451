// SPDX-License-Identifier: MIT
// Python bindings for the tree, BSΔE, risk and pricing layers plus the scenario runner.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "gconic/bsde.hpp"
#include "gconic/errors.hpp"
#include "gconic/pricing.hpp"
#include "gconic/risk.hpp"
#include "scenario.hpp"

namespace py = pybind11;
using namespace gconic;

namespace {

using TreeHandle = std::shared_ptr<FiltrationTree>;
using WalkHandle = std::shared_ptr<Martingale>;

TreeHandle hold(FiltrationTree t) { return std::make_shared<FiltrationTree>(std::move(t)); }

py::dict outcome_dict(const cli::RunSummary& s) {
  py::list jobs;
  for (const auto& j : s.jobs) {
    py::dict d;
    d["name"] = j.name;
    d["type"] = j.type;
    d["passed"] = j.passed;
    d["failures"] = j.failures;
    d["warnings"] = j.warnings;
    jobs.append(d);
  }
  py::dict out;
  out["scenario"] = s.scenario;
  out["seed"] = s.seed;
  out["passed"] = s.passed();
  out["jobs"] = jobs;
  return out;
}

}  // namespace

PYBIND11_MODULE(_gconic, m) {
  m.doc() = "Discrete-time g-expectations, dynamic risk measures and conic prices";

  auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigInvalid>(m, "ConfigInvalid", base.ptr());

  py::class_<FiltrationTree, TreeHandle>(m, "Tree")
      .def_static("binary", [](int h, double p) { return hold(FiltrationTree::binary(h, p)); },
                  py::arg("horizon"), py::arg("p_up") = 0.5)
      .def_static("uniform", [](int h, int b) { return hold(FiltrationTree::uniform(h, b)); },
                  py::arg("horizon"), py::arg("branching"))
      .def_static(
          "from_probabilities",
          [](const std::vector<std::vector<std::vector<double>>>& levels) {
            TreeSpec spec;
            for (const auto& l : levels) spec.levels.push_back({l});
            return hold(build_tree(spec));
          },
          py::arg("levels"), "levels[t][k] lists the child probabilities of node k at time t.")
      .def_property_readonly("horizon", &FiltrationTree::horizon)
      .def("size", &FiltrationTree::size, py::arg("t"))
      .def_property_readonly("leaves", &FiltrationTree::leaves)
      .def("path_probs", &FiltrationTree::path_probs, py::arg("t"))
      .def("cond_exp", &FiltrationTree::cond_exp, py::arg("x"), py::arg("level"), py::arg("t"))
      .def("zeros", &FiltrationTree::zeros);

  py::class_<Martingale, WalkHandle>(m, "Martingale")
      .def(py::init([](const TreeHandle& tree, Adapted increments) {
             return std::make_shared<Martingale>(tree, std::move(increments));
           }),
           py::arg("tree"), py::arg("increments"))
      .def_static("walk", [](const TreeHandle& tree) {
        return std::make_shared<Martingale>(symmetric_random_walk(tree));
      })
      .def_property_readonly("tree", [](const Martingale& w) {
        return std::const_pointer_cast<FiltrationTree>(w.tree_ptr());
      })
      .def_property_readonly("horizon", &Martingale::horizon)
      .def_property_readonly("increments", py::overload_cast<>(&Martingale::increments, py::const_));

  py::class_<Driver>(m, "Driver")
      .def_property_readonly("name", &Driver::name);
  py::class_<DriverFamily>(m, "DriverFamily")
      .def_property_readonly("name", &DriverFamily::name)
      .def("at", &DriverFamily::at, py::arg("x"));

  m.def("driver", &builtin_driver, py::arg("kind"), py::arg("param") = 0.0);
  m.def("family", &builtin_family, py::arg("kind"), py::arg("param") = 0.0);

  py::class_<BsdeSolution>(m, "BsdeSolution")
      .def_readonly("y", &BsdeSolution::y)
      .def_readonly("z", &BsdeSolution::z)
      .def_readonly("m", &BsdeSolution::m);

  m.def("solve_bsde",
        [](const Driver& g, const Martingale& w, const Level& terminal) {
          return solve_bsde(g, w, terminal);
        },
        py::arg("driver"), py::arg("w"), py::arg("terminal"));
  m.def("g_expectation", &g_expectation, py::arg("driver"), py::arg("w"), py::arg("x"),
        py::arg("level"), py::arg("t"));
  m.def("risk", &risk, py::arg("driver"), py::arg("w"), py::arg("stream"), py::arg("t"));
  m.def("acceptability_index",
        [](const DriverFamily& f, const Martingale& w, const DividendStream& d, int t, double tol) {
          IndexConfig cfg;
          cfg.tol = tol;
          return acceptability_index(f, w, d, t, cfg);
        },
        py::arg("family"), py::arg("w"), py::arg("stream"), py::arg("t"), py::arg("tol") = 1e-8);
  m.def("ask",
        [](const DriverFamily& f, double gamma, const Level& phi, const DividendStream& d,
           const Martingale& w, int t) { return ask(f, gamma, phi, d, w, t).value; },
        py::arg("family"), py::arg("gamma"), py::arg("phi"), py::arg("stream"), py::arg("w"),
        py::arg("t"));
  m.def("bid",
        [](const DriverFamily& f, double gamma, const Level& phi, const DividendStream& d,
           const Martingale& w, int t) { return bid(f, gamma, phi, d, w, t).value; },
        py::arg("family"), py::arg("gamma"), py::arg("phi"), py::arg("stream"), py::arg("w"),
        py::arg("t"));

  m.def("run_scenario",
        [](const std::string& path, const std::string& out, std::optional<std::uint64_t> seed,
           int jobs, bool strict) {
          cli::RunOptions opt;
          opt.out_dir = out;
          opt.seed = seed;
          opt.jobs = jobs;
          opt.strict = strict;
          cli::RunSummary s;
          {
            py::gil_scoped_release release;
            s = cli::run_scenario_file(path, opt);
          }
          return outcome_dict(s);
        },
        py::arg("path"), py::arg("out"), py::arg("seed") = py::none(), py::arg("jobs") = 1,
        py::arg("strict") = false);
  m.def("render_report", &cli::render_report, py::arg("out"));
}
