#pragma once

// Runs the fixture corpus through the verification pipeline and snapshots
// the written outputs, for the pipeline unit tests and the acceptance binary.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "citecheck/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace corpus {

inline std::vector<std::string> papers() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(testsupport::fixture("corpus/papers")))
    if (e.path().extension() == ".md") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline citecheck::pipeline::RunConfig run_config(const std::string& out_dir) {
  citecheck::pipeline::RunConfig cfg;
  cfg.inputs = papers();
  cfg.out_dir = out_dir;
  citecheck::pipeline::load_config_file(cfg, testsupport::fixture("corpus/config.json"));
  return cfg;
}

struct Run {
  std::vector<citecheck::pipeline::DocumentReport> reports;
  bool failures = false;
  std::shared_ptr<citecheck::Gateway> gateway;
};

inline Run run(citecheck::pipeline::RunConfig cfg) {
  citecheck::pipeline::finalize(cfg);
  auto services = citecheck::pipeline::make_services(cfg);
  Run r;
  for (const auto& p : cfg.inputs) r.reports.push_back(citecheck::pipeline::verify_document(p, cfg, services));
  r.failures = citecheck::pipeline::write_verify_outputs(r.reports, cfg.out_dir);
  r.gateway = services.gateway;
  return r;
}

// Relative path -> file bytes for every file under `dir`.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).generic_string()] = oracles::slurp(e.path());
  }
  return out;
}

struct ExpectationCheck {
  std::size_t expected = 0;
  std::size_t matched = 0;
  std::vector<std::string> mismatches;
};

// Compares each result against fixtures/corpus/expected.json:
// {doc_id: {target_key: [label, code|null, route]}}.
inline ExpectationCheck check_expected(const std::vector<citecheck::pipeline::DocumentReport>& reports) {
  using namespace citecheck;
  const Json expected = oracles::load_json(testsupport::fixture("corpus/expected.json"));
  ExpectationCheck c;
  for (const auto& [doc, targets] : expected.items()) {
    for (const auto& [key, want] : targets.items()) {
      ++c.expected;
      const VerificationResult* found = nullptr;
      for (const auto& rep : reports) {
        if (rep.doc_id != doc) continue;
        for (const auto& r : rep.results)
          if (r.target_key == key) found = &r;
      }
      if (!found) {
        c.mismatches.push_back(doc + "/" + key + ": missing");
        continue;
      }
      const std::string code = found->verdict.code ? to_string(*found->verdict.code) : "";
      const std::string want_code =
          want.at(1).is_null() ? "" : to_string(*parse_taxonomy_code(want.at(1).get<std::string>()));
      if (to_string(found->verdict.label) == want.at(0).get<std::string>() && code == want_code &&
          to_string(found->verdict.route) == want.at(2).get<std::string>()) {
        ++c.matched;
      } else {
        c.mismatches.push_back(doc + "/" + key + ": got " + to_string(found->verdict.label) + " " + code + " " +
                               to_string(found->verdict.route));
      }
    }
  }
  return c;
}

}  // namespace corpus
