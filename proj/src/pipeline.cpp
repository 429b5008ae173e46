#include "citecheck/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "citecheck/errors.hpp"
#include "citecheck/text.hpp"

namespace citecheck::pipeline {

namespace fs = std::filesystem;

std::optional<RouteMode> parse_route_mode(std::string_view s) {
  const std::string t = text::to_lower(s);
  if (t == "auto") return RouteMode::Auto;
  if (t == "accessible") return RouteMode::Accessible;
  if (t == "inaccessible") return RouteMode::Inaccessible;
  return std::nullopt;
}

namespace {

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty() || fs::path(p).is_absolute() || base.empty()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

}  // namespace

void load_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path);
  try {
    c.config = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  if (!c.config.is_object()) throw ConfigError("$", "config must be an object");
  c.config_path = path;
  c.base_dir = fs::absolute(path).parent_path().string();
  const Json& j = c.config;
  if (j.contains("funnel")) c.funnel = acsv::funnel_config_from_json(j.at("funnel"), c.funnel);
  if (j.contains("committee")) c.committee = icsv::committee_config_from_json(j.at("committee"), c.committee);
  if (j.contains("taxonomy")) {
    const Json& t = j.at("taxonomy");
    if (!t.is_object()) throw ConfigError("$.taxonomy", "must be an object");
    c.labeler.samples = t.value("samples", c.labeler.samples);
    c.labeler.temperature = t.value("temperature", c.labeler.temperature);
    if (c.labeler.samples < 1) throw ConfigError("$.taxonomy.samples", "must be >= 1");
  }
  if (j.contains("style")) {
    const auto s = parse_citation_style(j.at("style").get<std::string>());
    if (!s) throw ConfigError("$.style", "expected numeric, author-year, or footnote");
    c.style.style = *s;
  }
  if (j.contains("metadata")) {
    const Json& m = j.at("metadata");
    if (!m.is_object() || m.value("type", "fixture") != "fixture")
      throw ConfigError("$.metadata.type", "only fixture metadata stores are supported");
    if (!m.contains("dir")) throw ConfigError("$.metadata.dir", "required");
    c.metadata_dir = resolve(m.at("dir").get<std::string>(), c.base_dir);
  }
  if (j.contains("reference_stats")) c.reference_stats_path = resolve(j.at("reference_stats").get<std::string>(), c.base_dir);
}

void finalize(RunConfig& c) {
  c.committee.seed = c.seed;
  c.labeler.seed = c.seed;
  c.funnel.validate();
  c.committee.validate();
}

Services make_services(const RunConfig& c) {
  GatewayConfig g = load_gateway_config(c.config, c.base_dir, c.backend_override);
  if (!c.cache_dir.empty()) g.options.cache.dir = c.cache_dir;
  if (c.max_parallel) {
    if (*c.max_parallel < 1) throw ConfigError("--max-parallel", "must be >= 1");
    g.options.max_parallel = *c.max_parallel;
  }
  Services s;
  s.gateway = std::make_shared<Gateway>(g.backend, g.options);
  if (c.metadata_dir.empty())
    s.index = std::make_shared<csac::FixtureMetadataClient>();
  else
    s.index = std::make_shared<csac::FixtureMetadataClient>(c.metadata_dir);
  if (!c.reference_stats_path.empty()) s.stats = icsv::ReferenceStats::from_csv(c.reference_stats_path);
  return s;
}

namespace {

struct Task {
  const CitationEdge* edge = nullptr;
  std::string key;
  bool unresolved = false;
};

VerificationResult ghost_result(const CitationEdge& edge, const std::string& key, const std::string& why) {
  VerificationResult r;
  r.occurrence_id = edge.occurrence_id;
  r.target_key = key;
  r.verdict = Verdict::ghost();
  r.evidence.notes = why;
  r.stage_log.push_back("csac: ghost (" + why + ")");
  r.trace = Json{{"route", "Ghost"}};
  return r;
}

VerificationResult run_task(const Task& t, const dpcm::ParseOutput& citing, const RunConfig& config,
                            Services& services, const std::map<std::string, csac::AccessibilityVerdict>& access,
                            const std::map<std::string, std::string>& access_errors) {
  ScopedClient client(*services.gateway);
  VerificationResult r;
  const CitationEdge& edge = *t.edge;
  try {
    if (t.unresolved) {
      r = ghost_result(edge, t.key, "marker has no bibliography entry");
    } else if (auto err = access_errors.find(t.key); err != access_errors.end()) {
      r.occurrence_id = edge.occurrence_id;
      r.target_key = t.key;
      r.verdict = Verdict::make(VerdictLabel::Undecidable, 0.0, Route::Inaccessible);
      r.error = err->second;
      r.stage_log.push_back("csac: inconclusive");
    } else {
      const auto& av = access.at(t.key);
      RouteMode mode = config.route;
      if (av.status == csac::AccessStatus::Ghost) {
        r = ghost_result(edge, t.key, "reference does not resolve to an indexed source");
      } else {
        const bool accessible = av.status == csac::AccessStatus::Accessible;
        bool use_acsv = mode == RouteMode::Accessible || (mode == RouteMode::Auto && accessible);
        if (use_acsv && !av.document) throw ContractError("route forced to accessible but no full text is available");
        if (use_acsv) {
          r = acsv::verify_accessible(edge, t.key, av.document->doc, citing.doc, client, config.funnel, config.seed);
          if (av.record) r.evidence.metadata = av.record->meta;
        } else {
          if (!av.record) throw ContractError("no index record for the inaccessible route");
          r = icsv::verify_inaccessible(edge, t.key, *av.record, citing.doc, *services.index, client, services.stats,
                                        config.committee, config.style);
        }
        r.stage_log.insert(r.stage_log.begin(), "csac: " + csac::to_string(av.status) +
                                                    (av.resolved_via.empty() ? "" : " via " + av.resolved_via));
      }
      if (r.verdict.label == VerdictLabel::Miscitation && r.verdict.route != Route::Ghost) {
        const auto d = taxonomy::assign_error_code(r.evidence, av, client, config.labeler);
        r.verdict = Verdict::make(r.verdict.label, r.verdict.confidence, r.verdict.route, d.code);
        r.trace["taxonomy"] = taxonomy::to_json(d);
        r.stage_log.push_back("taxonomy: " + to_string(d.code));
      }
    }
  } catch (const std::exception& e) {
    r.occurrence_id = edge.occurrence_id;
    r.target_key = t.key;
    r.verdict = Verdict::make(VerdictLabel::Undecidable, 0.0, r.verdict.route);
    r.error = e.what();
    r.stage_log.push_back(std::string("error: ") + e.what());
  }
  r.token_usage = client.usage();
  return r;
}

}  // namespace

DocumentReport verify_document(const std::string& path, const RunConfig& config, Services& services) {
  DocumentReport rep;
  rep.path = path;
  dpcm::ParseOutput citing;
  try {
    citing = dpcm::parse_path(path, config.style, services.gateway.get(), config.seed);
  } catch (const std::exception& e) {
    rep.doc_id = fs::path(path).stem().string();
    rep.error = e.what();
    return rep;
  }
  rep.doc_id = citing.doc.doc_id;
  rep.anomalies = citing.anomalies;
  rep.edges = citing.edges.size();

  std::vector<Task> tasks;
  std::vector<std::string> keys;
  for (const auto& e : citing.edges) {
    for (const auto& k : e.target_keys) {
      tasks.push_back({&e, k, false});
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    for (const auto& m : e.unresolved_markers) tasks.push_back({&e, m, true});
  }

  std::map<std::string, csac::AccessibilityVerdict> access;
  std::map<std::string, std::string> access_errors;
  for (const auto& k : keys) {
    const auto it = std::find_if(citing.entries.begin(), citing.entries.end(), [&](const BibEntry& b) { return b.key == k; });
    if (it == citing.entries.end()) {
      access_errors[k] = "edge target '" + k + "' missing from the bibliography";
      continue;
    }
    try {
      access[k] = csac::classify_accessibility(*it, *services.index, config.style);
    } catch (const InconclusiveError& e) {
      access_errors[k] = e.what();
    }
  }

  rep.results = parallel_map(tasks.size(), services.gateway->max_parallel(), [&](std::size_t i) {
    return run_task(tasks[i], citing, config, services, access, access_errors);
  });
  return rep;
}

Json summarize(const std::vector<DocumentReport>& reports) {
  auto block = [](const std::vector<const VerificationResult*>& rs) {
    Json verdicts{{"Supported", 0}, {"Miscitation", 0}, {"Undecidable", 0}};
    Json codes = Json::object();
    for (auto c : all_taxonomy_codes()) codes[to_string(c)] = 0;
    Json routes{{"Accessible", 0}, {"Inaccessible", 0}, {"Ghost", 0}};
    double conf = 0.0;
    std::size_t errors = 0;
    for (const auto* r : rs) {
      verdicts[to_string(r->verdict.label)] = verdicts[to_string(r->verdict.label)].get<int>() + 1;
      routes[to_string(r->verdict.route)] = routes[to_string(r->verdict.route)].get<int>() + 1;
      if (r->verdict.code) codes[to_string(*r->verdict.code)] = codes[to_string(*r->verdict.code)].get<int>() + 1;
      conf += r->verdict.confidence;
      if (r->error) ++errors;
    }
    const double n = static_cast<double>(rs.size());
    return Json{{"citations", rs.size()},
                {"verdicts", verdicts},
                {"taxonomy_codes", codes},
                {"routes", routes},
                {"mean_confidence", rs.empty() ? Json(nullptr) : Json(conf / n)},
                {"abstention_rate",
                 rs.empty() ? Json(nullptr) : Json(verdicts["Undecidable"].get<double>() / n)},
                {"errors", errors}};
  };
  std::vector<const VerificationResult*> all;
  Json docs = Json::array();
  for (const auto& rep : reports) {
    std::vector<const VerificationResult*> mine;
    for (const auto& r : rep.results) {
      mine.push_back(&r);
      all.push_back(&r);
    }
    Json d = block(mine);
    d["doc_id"] = rep.doc_id;
    d["path"] = fs::path(rep.path).filename().string();
    d["edges"] = rep.edges;
    d["anomalies"] = rep.anomalies.size();
    d["error"] = rep.error ? Json(*rep.error) : Json(nullptr);
    docs.push_back(d);
  }
  Json s = block(all);
  s["documents"] = docs;
  return s;
}

namespace {

std::string fmt(double v, int prec = 3) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

std::string md_cell(std::string s) {
  s = text::replace_all(std::move(s), "|", "\\|");
  return text::collapse_whitespace(s);
}

}  // namespace

std::string markdown_digest(const Json& summary, const std::vector<DocumentReport>& reports) {
  std::ostringstream o;
  o << "# Citation integrity report\n\n";
  auto totals = [&](const Json& b) {
    o << "| Verdict | Count |\n|---|---|\n";
    for (const auto& [k, v] : b.at("verdicts").items()) o << "| " << k << " | " << v.get<int>() << " |\n";
    o << "\n| Error code | Count |\n|---|---|\n";
    for (const auto& [k, v] : b.at("taxonomy_codes").items()) o << "| " << k << " | " << v.get<int>() << " |\n";
    o << "\n";
    if (!b.at("mean_confidence").is_null())
      o << "Mean confidence " << fmt(b.at("mean_confidence").get<double>()) << ", abstention rate "
        << fmt(b.at("abstention_rate").get<double>()) << ".\n\n";
  };
  o << "Citations checked: " << summary.at("citations").get<std::size_t>() << " across " << reports.size()
    << " document(s).\n\n";
  totals(summary);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& rep = reports[i];
    const Json& d = summary.at("documents").at(i);
    o << "## " << rep.doc_id << "\n\n";
    if (rep.error) {
      o << "Parsing failed: " << md_cell(*rep.error) << "\n\n";
      continue;
    }
    o << "Edges " << rep.edges << ", extraction anomalies " << rep.anomalies.size() << ".\n\n";
    totals(d);
    bool header = false;
    for (const auto& r : rep.results) {
      if (r.verdict.label != VerdictLabel::Miscitation && !r.error) continue;
      if (!header) {
        o << "| Occurrence | Target | Verdict | Code | Confidence | Note |\n|---|---|---|---|---|---|\n";
        header = true;
      }
      o << "| " << r.occurrence_id << " | " << r.target_key << " | " << to_string(r.verdict.label) << " | "
        << (r.verdict.code ? to_string(*r.verdict.code) : "") << " | " << fmt(r.verdict.confidence) << " | "
        << md_cell(r.error ? "error: " + *r.error : r.evidence.notes) << " |\n";
    }
    if (header) o << "\n";
  }
  return o.str();
}

std::string bundle_file_name(std::size_t index, const VerificationResult& r) {
  std::string name;
  for (char c : r.occurrence_id + "_" + r.target_key) {
    name.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
  }
  std::ostringstream o;
  o << std::setw(4) << std::setfill('0') << index << "_" << name << ".json";
  return o.str();
}

bool write_verify_outputs(const std::vector<DocumentReport>& reports, const std::string& out_dir) {
  bool failures = false;
  fs::create_directories(out_dir);
  for (const auto& rep : reports) {
    if (rep.error) failures = true;
    const fs::path dir = fs::path(out_dir) / "bundles" / rep.doc_id;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < rep.results.size(); ++i) {
      const auto& r = rep.results[i];
      if (r.error) failures = true;
      std::ofstream f(dir / bundle_file_name(i, r));
      f << to_audit_json(r).dump(2) << "\n";
    }
  }
  const Json summary = summarize(reports);
  std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << "\n";
  std::ofstream(fs::path(out_dir) / "summary.md") << markdown_digest(summary, reports);
  return failures;
}

}  // namespace citecheck::pipeline
