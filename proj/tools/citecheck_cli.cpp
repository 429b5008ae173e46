// citecheck: parse, verify, eval, ablate.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/eval.hpp"
#include "citecheck/pipeline.hpp"

namespace fs = std::filesystem;
using namespace citecheck;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartial = 2;
constexpr int kFatal = 3;

Json default_config() {
  return Json{{"backend", "stub"}, {"backends", {{"stub", {{"type", "stub"}}}}}, {"cache", {{"enabled", false}}}};
}

Json read_json(const std::string& path, const std::string& flag) {
  std::ifstream in(path);
  if (!in) throw ConfigError(flag, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(flag, std::string("invalid JSON: ") + e.what());
  }
}

void write_text(const fs::path& p, const std::string& body) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + p.string());
  f << body;
}

// Sizes like "1-25" or "1,2,3,6".
std::vector<int> parse_sizes(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dash = part.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoi(part));
      } else {
        const int lo = std::stoi(part.substr(0, dash));
        const int hi = std::stoi(part.substr(dash + 1));
        if (hi < lo) throw ConfigError("--sizes", "empty range " + part);
        for (int n = lo; n <= hi; ++n) out.push_back(n);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("--sizes", "expected integers or ranges, got '" + part + "'");
    }
  }
  for (int n : out) {
    if (n < 1) throw ConfigError("--sizes", "sizes must be >= 1");
  }
  if (out.empty()) throw ConfigError("--sizes", "no sizes given");
  return out;
}

struct Globals {
  std::string config_path;
  std::string backend;
  std::string cache_dir;
  std::string out = "out";
  std::int64_t seed = 0;
  int max_parallel = 0;
  std::string route = "auto";
  std::string style;
};

pipeline::RunConfig make_run_config(const Globals& g, const std::vector<std::string>& inputs) {
  pipeline::RunConfig c;
  c.inputs = inputs;
  if (!g.config_path.empty()) {
    pipeline::load_config_file(c, g.config_path);
  } else {
    c.config = default_config();
    c.base_dir = fs::current_path().string();
  }
  c.backend_override = g.backend;
  c.cache_dir = g.cache_dir;
  c.out_dir = g.out;
  c.seed = g.seed;
  if (g.max_parallel != 0) c.max_parallel = g.max_parallel;
  const auto route = pipeline::parse_route_mode(g.route);
  if (!route) throw ConfigError("--route", "expected auto, accessible, or inaccessible");
  c.route = *route;
  if (!g.style.empty()) {
    const auto s = parse_citation_style(g.style);
    if (!s) throw ConfigError("--style", "expected numeric, author-year, or footnote");
    c.style.style = *s;
  }
  pipeline::finalize(c);
  return c;
}

int run_parse(const Globals& g, const std::vector<std::string>& inputs) {
  auto config = make_run_config(g, inputs);
  auto services = pipeline::make_services(config);
  bool failed = false;
  Json index = Json::array();
  for (const auto& path : inputs) {
    auto style = config.style;
    if (style.base_dir.empty()) style.base_dir = fs::absolute(path).parent_path().string();
    try {
      const auto out = dpcm::parse_path(path, style, services.gateway.get(), config.seed);
      write_text(fs::path(config.out_dir) / (out.doc.doc_id + ".parse.json"), dpcm::to_json(out).dump(2) + "\n");
      Json anomalies = Json::array();
      for (const auto& a : out.anomalies) anomalies.push_back(dpcm::to_json(a));
      write_text(fs::path(config.out_dir) / (out.doc.doc_id + ".anomalies.json"), anomalies.dump(2) + "\n");
      index.push_back(Json{{"path", path},
                           {"doc_id", out.doc.doc_id},
                           {"edges", out.edges.size()},
                           {"entries", out.entries.size()},
                           {"anomalies", out.anomalies.size()}});
      std::cout << out.doc.doc_id << ": " << out.edges.size() << " edges, " << out.entries.size() << " entries, "
                << out.anomalies.size() << " anomalies\n";
    } catch (const std::exception& e) {
      failed = true;
      index.push_back(Json{{"path", path}, {"error", e.what()}});
      std::cerr << path << ": " << e.what() << "\n";
    }
  }
  write_text(fs::path(config.out_dir) / "parse_index.json", index.dump(2) + "\n");
  return failed ? kPartial : kOk;
}

int run_verify(const Globals& g, const std::vector<std::string>& inputs) {
  auto config = make_run_config(g, inputs);
  auto services = pipeline::make_services(config);
  std::vector<pipeline::DocumentReport> reports;
  for (const auto& path : inputs) {
    auto c = config;
    if (c.style.base_dir.empty()) c.style.base_dir = fs::absolute(path).parent_path().string();
    reports.push_back(pipeline::verify_document(path, c, services));
  }
  const bool partial = pipeline::write_verify_outputs(reports, config.out_dir);
  const Json summary = pipeline::summarize(reports);
  std::cout << "citations " << summary.at("citations").get<std::size_t>() << ": "
            << summary.at("verdicts").dump() << "\n";
  return partial ? kPartial : kOk;
}

struct EvalArgs {
  std::string benchmark;
  std::string predictions;
  std::string ledger_full;
  std::string ledger_agent;
};

int run_eval(const Globals& g, const EvalArgs& a) {
  auto config = make_run_config(g, {});
  auto services = pipeline::make_services(config);
  const auto gold = eval::load_benchmark(a.benchmark);
  const auto predictions = eval::predictions_from_json(read_json(a.predictions, "--predictions"));
  auto report = eval::evaluate(gold, predictions, *services.gateway, config.seed);
  bool partial = false;
  if (!a.ledger_full.empty() || !a.ledger_agent.empty()) {
    if (a.ledger_full.empty() || a.ledger_agent.empty())
      throw ConfigError("--ledger-full/--ledger-agent", "both ledgers are required for the token economy");
    try {
      report.economy = eval::token_economy_report(eval::ledger_from_json(read_json(a.ledger_full, "--ledger-full")),
                                                  eval::ledger_from_json(read_json(a.ledger_agent, "--ledger-agent")));
    } catch (const UndefinedResultError& e) {
      std::cerr << "token economy: " << e.what() << "\n";
      partial = true;
    }
  }
  write_text(fs::path(config.out_dir) / "metrics.json", eval::to_json(report).dump(2) + "\n");
  write_text(fs::path(config.out_dir) / "metrics.csv", eval::metrics_csv(report));
  std::cout << "acc_pass_at_3 " << report.acc_pass_at_3 << " over " << report.instances.size() << " instances\n";
  return partial ? kPartial : kOk;
}

struct AblateArgs {
  std::string pool;
  std::string sizes = "1-25";
  int trials = 200;
  int sources = 30;
  std::string write_pool;
};

int run_ablate(const Globals& g, const AblateArgs& a) {
  icsv::CommitteeConfig committee;
  if (!g.config_path.empty()) {
    pipeline::RunConfig c;
    pipeline::load_config_file(c, g.config_path);
    committee = c.committee;
  }
  if (a.trials < 1) throw ConfigError("--trials", "must be >= 1");
  std::vector<eval::SyntheticSource> pool;
  if (!a.pool.empty()) {
    const Json j = read_json(a.pool, "--pool");
    if (!j.is_array()) throw ConfigError("--pool", "expected an array of sources");
    for (const auto& s : j) pool.push_back(eval::synthetic_source_from_json(s));
  } else {
    eval::PoolOptions o;
    if (a.sources < 1) throw ConfigError("--sources", "must be >= 1");
    o.sources = a.sources;
    o.seed = static_cast<std::uint64_t>(g.seed);
    pool = eval::synthetic_pool(o);
  }
  eval::validate_pool(pool);
  if (!a.write_pool.empty()) {
    Json j = Json::array();
    for (const auto& s : pool) j.push_back(eval::to_json(s));
    write_text(a.write_pool, j.dump(2) + "\n");
  }
  const auto rows = eval::committee_ablation(pool, parse_sizes(a.sizes), a.trials, static_cast<std::uint64_t>(g.seed),
                                             committee);
  const std::string csv = eval::ablation_csv(rows);
  write_text(fs::path(g.out) / "ablation.csv", csv);
  write_text(fs::path(g.out) / "ablation.json", eval::to_json(rows).dump(2) + "\n");
  std::cout << csv;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Citation verification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->envname("BIBAGENT_CONFIG");
  app.add_option("--backend", g.backend, "Backend id from the config's backends table")->envname("BIBAGENT_BACKEND");
  app.add_option("--cache-dir", g.cache_dir, "Response cache directory")->envname("BIBAGENT_CACHE_DIR");
  app.add_option("--out", g.out, "Output directory")->envname("BIBAGENT_OUT");
  app.add_option("--seed", g.seed, "Seed for sampling and synthetic data")->envname("BIBAGENT_SEED");
  app.add_option("--max-parallel", g.max_parallel, "Concurrent model calls")->envname("BIBAGENT_MAX_PARALLEL");
  app.add_option("--route", g.route, "auto, accessible, or inaccessible")->envname("BIBAGENT_ROUTE");
  app.add_option("--style", g.style, "numeric, author-year, or footnote")->envname("BIBAGENT_STYLE");

  std::vector<std::string> inputs;
  auto* parse = app.add_subcommand("parse", "Parse documents into citation graphs and anomaly reports");
  parse->add_option("inputs", inputs, "Document paths")->required()->check(CLI::ExistingPath);
  auto* verify = app.add_subcommand("verify", "Verify every citation and write audit bundles");
  verify->add_option("inputs", inputs, "Document paths")->required()->check(CLI::ExistingPath);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Grade predictions against a benchmark");
  ev->add_option("--benchmark", ea.benchmark, "Benchmark CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--predictions", ea.predictions, "Predictions JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--ledger-full", ea.ledger_full, "Full-text baseline token ledger JSON")->check(CLI::ExistingFile);
  ev->add_option("--ledger-agent", ea.ledger_agent, "Agent token ledger JSON")->check(CLI::ExistingFile);

  AblateArgs aa;
  auto* ab = app.add_subcommand("ablate", "Committee-size reliability table");
  ab->add_option("--pool", aa.pool, "Pool JSON; generated when omitted")->check(CLI::ExistingFile);
  ab->add_option("--sizes", aa.sizes, "Committee sizes, e.g. 1-25 or 1,2,6");
  ab->add_option("--trials", aa.trials, "Trials per size");
  ab->add_option("--sources", aa.sources, "Generated pool size");
  ab->add_option("--write-pool", aa.write_pool, "Write the pool used to this path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*parse) return run_parse(g, inputs);
    if (*verify) return run_verify(g, inputs);
    if (*ev) return run_eval(g, ea);
    if (*ab) return run_ablate(g, aa);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const SchemaError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return kFatal;
  }
  return kFatal;
}
