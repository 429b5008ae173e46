// Python bindings. Structured results cross the boundary as JSON text; the
// package wrapper decodes them.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "citecheck/dpcm.hpp"
#include "citecheck/eval.hpp"
#include "citecheck/icsv.hpp"
#include "citecheck/pipeline.hpp"

namespace py = pybind11;
using namespace citecheck;

namespace {

pipeline::RunConfig run_config(const std::string& config_path, std::int64_t seed) {
  pipeline::RunConfig c;
  if (!config_path.empty()) {
    pipeline::load_config_file(c, config_path);
  } else {
    c.config = Json{{"backend", "stub"}, {"backends", {{"stub", {{"type", "stub"}}}}}, {"cache", {{"enabled", false}}}};
  }
  c.seed = seed;
  pipeline::finalize(c);
  return c;
}

std::vector<eval::Grade> grades_of(const std::vector<bool>& correct) {
  std::vector<eval::Grade> out;
  for (bool c : correct) out.push_back(c ? eval::Grade::Correct : eval::Grade::Incorrect);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Citation verification core";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ContractError>(m, "ContractError");
  py::register_exception<UndefinedResultError>(m, "UndefinedResultError");
  py::register_exception<SchemaError>(m, "SchemaError");

  m.def(
      "parse_json",
      [](const std::string& path, const std::string& config_path, std::int64_t seed) {
        auto c = run_config(config_path, seed);
        auto services = pipeline::make_services(c);
        return dpcm::to_json(dpcm::parse_path(path, c.style, services.gateway.get(), seed)).dump();
      },
      py::arg("path"), py::arg("config") = "", py::arg("seed") = 0);

  m.def(
      "verify_json",
      [](const std::vector<std::string>& inputs, const std::string& config_path, const std::string& out_dir,
         std::int64_t seed) {
        auto c = run_config(config_path, seed);
        auto services = pipeline::make_services(c);
        std::vector<pipeline::DocumentReport> reports;
        for (const auto& p : inputs) reports.push_back(pipeline::verify_document(p, c, services));
        if (!out_dir.empty()) pipeline::write_verify_outputs(reports, out_dir);
        return pipeline::summarize(reports).dump();
      },
      py::arg("inputs"), py::arg("config") = "", py::arg("out_dir") = "", py::arg("seed") = 0);

  m.def("aggregate_consensus", &icsv::aggregate_consensus, py::arg("gamma"), py::arg("votes"));

  m.def(
      "decide_json",
      [](const std::vector<double>& gamma, const std::vector<int>& votes, const std::vector<double>& stability,
         std::size_t committee_size) {
        return icsv::to_json(icsv::decide(gamma, votes, stability, committee_size, icsv::CommitteeConfig{})).dump();
      },
      py::arg("gamma"), py::arg("votes"), py::arg("stability"), py::arg("committee_size"));

  m.def(
      "acc_pass_at_3",
      [](const std::vector<std::vector<bool>>& correct) {
        std::vector<std::vector<eval::Grade>> g;
        for (const auto& row : correct) g.push_back(grades_of(row));
        return eval::acc_pass_at_3(g);
      },
      py::arg("correct"));

  m.def(
      "token_economy",
      [](const std::string& full_json, const std::string& agent_json) {
        return eval::token_economy(eval::ledger_from_json(Json::parse(full_json)),
                                   eval::ledger_from_json(Json::parse(agent_json)));
      },
      py::arg("full_text"), py::arg("agent"));

  m.def(
      "ablation_json",
      [](int sources, const std::vector<int>& sizes, int trials, std::uint64_t seed) {
        eval::PoolOptions o;
        o.sources = sources;
        o.seed = seed;
        return eval::to_json(eval::committee_ablation(eval::synthetic_pool(o), sizes, trials, seed)).dump();
      },
      py::arg("sources") = 30, py::arg("sizes") = std::vector<int>{1, 2, 6}, py::arg("trials") = 200,
      py::arg("seed") = 7);
}
