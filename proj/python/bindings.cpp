// Python bindings. Structured values cross the boundary as JSON text; the
// Python package decodes them.

#include "verify/bench.hpp"
#include "verify/linker.hpp"
#include "verify/pipeline.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace verify;

namespace {

std::string parse_solution(const std::string& text, const std::string& problem_json, bool do_normalize) {
  StructuredSolution s = parse_structured_solution(text);
  if (do_normalize) s = normalize(s);
  if (!problem_json.empty()) s = classify_premises(s, problem_from_json(json::parse(problem_json)));
  json j = {{"solution", to_json(s)}, {"violations", json::array()}};
  for (auto& v : validate_structure(s)) j["violations"].push_back(to_json(v));
  return canonical_dump(j);
}

// No fact list: every fact counts as established.
std::string link_solution(const std::string& solution_json,
                          const std::optional<std::vector<std::string>>& established_facts) {
  StructuredSolution s = solution_from_json(json::parse(solution_json));
  SolutionHypergraph g = build_hypergraph(s);
  std::optional<std::set<std::string>> facts;
  if (established_facts) facts.emplace(established_facts->begin(), established_facts->end());
  LinkResult r = check_reachability(g, facts);
  return canonical_dump({{"hypergraph", to_json(g)}, {"link", to_json(r)}});
}

std::string run(const std::string& problem_json, const std::string& config_json, const std::string& base_dir) {
  PipelineConfig cfg = config_json.empty() ? PipelineConfig{} : config_from_json(json::parse(config_json), base_dir);
  ProblemStatement p = problem_from_json(json::parse(problem_json));
  ServiceFactory factory(cfg, [](double) {});
  return canonical_dump(run_automatic(p, cfg, factory));
}

std::string metrics(const std::vector<std::vector<bool>>& predictions, const std::vector<bool>& labels) {
  return canonical_dump(to_json(compute_metrics(predictions, labels)));
}

std::string ab(const std::string& a_json, const std::string& b_json, bool include_trivial) {
  auto a = batch_result_from_json(json::parse(a_json));
  auto b = batch_result_from_json(json::parse(b_json));
  return canonical_dump(to_json(ab_compare(a, b, include_trivial)));
}

std::string dataset(const std::string& text) {
  json arr = json::array();
  for (auto& r : parse_dataset(text)) arr.push_back(to_json(r));
  return canonical_dump(arr);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Structured-solution verification core";

  static py::exception<Error> verify_error(m, "VerifyError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      std::string msg = std::string(to_string(e.code())) + ": " + e.what();
      PyErr_SetString(verify_error.ptr(), msg.c_str());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("parse_solution", &parse_solution, py::arg("text"), py::arg("problem_json") = "",
        py::arg("normalize") = true);
  m.def("link", &link_solution, py::arg("solution_json"), py::arg("established_facts") = py::none());
  m.def("run", &run, py::arg("problem_json"), py::arg("config_json") = "", py::arg("base_dir") = ".",
        py::call_guard<py::gil_scoped_release>());
  m.def("compute_metrics", &metrics, py::arg("predictions"), py::arg("labels"));
  m.def("ab_compare", &ab, py::arg("run_a_json"), py::arg("run_b_json"), py::arg("include_trivial") = false);
  m.def("parse_dataset", &dataset, py::arg("text"));
  m.def("strip_timing", [](const std::string& j) { return canonical_dump(strip_timing(json::parse(j))); });
  m.def("render_report", [](const std::string& j) { return render_report(json::parse(j)); });
}
