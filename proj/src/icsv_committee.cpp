#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "citecheck/csv.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/icsv.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::icsv {

Json to_json(const AspectCluster& c) {
  return Json{{"cluster_id", c.cluster_id},
              {"cluster_name", c.cluster_name},
              {"aspect_summary", c.aspect_summary},
              {"claim_ids", c.claim_ids},
              {"papers", c.papers},
              {"evidence_statement", c.evidence_statement},
              {"support", c.support},
              {"gamma", c.gamma}};
}

namespace {

std::optional<Json> extract_json(const std::string& reply) {
  const std::string s = text::strip_code_fence(reply);
  const auto open = s.find('{');
  const auto close = s.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  try {
    return Json::parse(s.substr(open, close - open + 1));
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

std::optional<int> as_claim_id(const Json& v) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_string()) {
    const std::string s = text::trim(v.get<std::string>());
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) && s.size() < 9)
      return std::stoi(s);
  }
  return std::nullopt;
}

std::string truncate_words(const std::string& s, std::size_t n) {
  auto words = text::split_whitespace(s);
  if (words.size() > n) words.resize(n);
  return text::join(words, " ");
}

}  // namespace

std::string validate_partition(const Json& reply, const std::vector<int>& ids) {
  if (!reply.is_object() || !reply.contains("clusters") || !reply.at("clusters").is_array())
    return "missing \"clusters\" array";
  const std::set<int> want(ids.begin(), ids.end());
  std::set<int> seen;
  std::set<std::string> cluster_ids;
  for (const auto& c : reply.at("clusters")) {
    if (!c.is_object() || !c.contains("claim_ids") || !c.at("claim_ids").is_array()) return "cluster without claim_ids";
    if (c.at("claim_ids").empty()) return "empty cluster";
    if (c.contains("cluster_id") && c.at("cluster_id").is_string() &&
        !cluster_ids.insert(c.at("cluster_id").get<std::string>()).second)
      return "duplicate cluster_id " + c.at("cluster_id").get<std::string>();
    for (const auto& v : c.at("claim_ids")) {
      const auto id = as_claim_id(v);
      if (!id) return "non-integer claim id";
      if (!want.count(*id)) return "unknown claim id " + std::to_string(*id);
      if (!seen.insert(*id).second) return "claim " + std::to_string(*id) + " assigned twice";
    }
  }
  for (int id : ids) {
    if (!seen.count(id)) return "claim " + std::to_string(id) + " not assigned";
  }
  return "";
}

namespace {

void fill_papers(AspectCluster& c, const std::vector<ClaimRef>& claims) {
  std::set<std::size_t> papers;
  for (int id : c.claim_ids) {
    for (const auto& cl : claims) {
      if (cl.id == id) papers.insert(cl.witness);
    }
  }
  c.papers.assign(papers.begin(), papers.end());
}

}  // namespace

Clustering cluster_claims(const std::vector<ClaimRef>& claims, const MetadataSnapshot& target, ModelClient& client,
                          const std::string& call_tag) {
  if (claims.empty()) throw ContractError("cluster_claims: no claims");
  Clustering out;
  std::vector<int> ids;
  for (const auto& c : claims) ids.push_back(c.id);

  if (claims.size() == 1) {
    AspectCluster c;
    c.cluster_id = "C1";
    c.cluster_name = truncate_words(claims[0].text, 8);
    c.aspect_summary = claims[0].text;
    c.claim_ids = {claims[0].id};
    fill_papers(c, claims);
    out.clusters.push_back(std::move(c));
    return out;
  }

  std::string listing;
  for (std::size_t i = 0; i < claims.size(); ++i) {
    if (i) listing += "\n";
    listing += std::to_string(claims[i].id) + ") " + claims[i].text;
  }
  const std::string user = text::replace_all(
      text::fill_template(prompts::cluster_user,
                          {{"title_B", target.title},
                           {"year_B", target.year ? std::to_string(*target.year) : std::string("unknown")},
                           {"venue_B", target.venue.empty() ? std::string("unknown") : target.venue}}),
      prompts::kClusterClaimSlot, listing);

  std::string reason;
  for (int attempt = 0; attempt < 2; ++attempt) {
    CompletionRequest req;
    req.system_text = std::string(prompts::cluster_system);
    req.user_text = attempt == 0 ? user
                                 : user + "\n\nYour previous output was rejected (" + reason +
                                       "). Return the complete JSON again with every claim id in exactly one cluster.";
    req.decoding = DecodingConfig::deterministic(0);
    req.call_tag = call_tag;
    ++out.attempts;
    const auto parsed = extract_json(client.complete(req).at(0).text);
    reason = parsed ? validate_partition(*parsed, ids) : "reply is not JSON";
    if (!reason.empty()) {
      out.warnings.push_back("clustering attempt " + std::to_string(attempt + 1) + ": " + reason);
      continue;
    }
    for (const auto& jc : parsed->at("clusters")) {
      AspectCluster c;
      c.cluster_id = jc.contains("cluster_id") && jc.at("cluster_id").is_string()
                         ? jc.at("cluster_id").get<std::string>()
                         : "C" + std::to_string(out.clusters.size() + 1);
      const std::string name = jc.value("cluster_name", "");
      c.cluster_name = truncate_words(name, 8);
      if (c.cluster_name != text::collapse_whitespace(name))
        out.warnings.push_back("cluster " + c.cluster_id + ": name truncated to 8 words");
      c.aspect_summary = text::first_sentence(jc.value("aspect_summary", ""));
      for (const auto& v : jc.at("claim_ids")) c.claim_ids.push_back(*as_claim_id(v));
      fill_papers(c, claims);
      out.clusters.push_back(std::move(c));
    }
    return out;
  }

  // Singleton fallback keeps every claim; the run is flagged as degraded.
  out.degraded = true;
  for (std::size_t i = 0; i < claims.size(); ++i) {
    AspectCluster c;
    c.cluster_id = "C" + std::to_string(i + 1);
    c.cluster_name = truncate_words(claims[i].text, 8);
    c.aspect_summary = claims[i].text;
    c.claim_ids = {claims[i].id};
    fill_papers(c, claims);
    out.clusters.push_back(std::move(c));
  }
  return out;
}

std::string distill_evidence(const AspectCluster& cluster, const std::vector<ClaimRef>& claims,
                             const MetadataSnapshot& target, ModelClient& client, std::vector<std::string>* warnings,
                             const std::string& call_tag) {
  if (cluster.claim_ids.empty()) throw ContractError("distill_evidence: empty cluster");
  std::vector<std::string> members;
  for (int id : cluster.claim_ids) {
    for (const auto& c : claims) {
      if (c.id == id) members.push_back(c.text);
    }
  }
  if (members.size() == 1) return members.front();
  std::string listing;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (i) listing += "\n";
    listing += "- " + members[i];
  }
  CompletionRequest req;
  req.system_text = std::string(prompts::distill_system);
  req.user_text = text::replace_all(
      text::fill_template(prompts::distill_user, {{"title_B", target.title},
                                                  {"cluster_id", cluster.cluster_id},
                                                  {"cluster_name", cluster.cluster_name}}),
      prompts::kDistillClaimSlot, listing);
  req.decoding = DecodingConfig::deterministic(0);
  req.call_tag = call_tag;
  const std::string reply = text::trim(text::strip_code_fence(client.complete(req).at(0).text));
  const auto sentences = text::split_sentences(reply);
  if (sentences.empty()) {
    if (warnings) warnings->push_back("cluster " + cluster.cluster_id + ": empty distillation; first claim used");
    return members.front();
  }
  if (sentences.size() > 1 && warnings)
    warnings->push_back("cluster " + cluster.cluster_id + ": distillation had " + std::to_string(sentences.size()) +
                        " sentences; first kept");
  return sentences.front();
}

// ---- influence ---------------------------------------------------------------

namespace {

std::string stats_key(const std::string& table, const std::string& field, std::optional<int> year) {
  return table + "|" + field + "|" + (year ? std::to_string(*year) : std::string());
}

const std::set<std::string>& known_tables() {
  static const std::set<std::string> k = {"citations",     "impact_factor", "conference_metric",
                                          "two_year_rate", "long_run_rate", "repository_rate"};
  return k;
}

}  // namespace

void ReferenceStats::add(const std::string& table, const std::string& field, std::optional<int> year,
                         std::vector<double> values) {
  if (!known_tables().count(table)) throw SchemaError("reference stats: unknown table '" + table + "'");
  if (values.empty()) throw SchemaError("reference stats: empty distribution for " + stats_key(table, field, year));
  auto& slot = tables_[stats_key(table, field, year)];
  slot.insert(slot.end(), values.begin(), values.end());
}

const std::vector<double>* ReferenceStats::find(const std::string& table, const std::string& field,
                                                std::optional<int> year) const {
  const auto it = tables_.find(stats_key(table, field, year));
  return it == tables_.end() ? nullptr : &it->second;
}

ReferenceStats ReferenceStats::from_table(const std::vector<std::vector<std::string>>& rows,
                                          const std::vector<std::string>& header) {
  auto col = [&](const char* name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(std::string("reference stats: missing column '") + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_table = col("table");
  const std::size_t c_field = col("field_id");
  const std::size_t c_year = col("year");
  const std::size_t c_values = col("values");
  ReferenceStats s;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "reference stats row " + std::to_string(r + 1);
    if (row.size() != header.size()) throw SchemaError(where + ": expected " + std::to_string(header.size()) + " fields");
    std::optional<int> year;
    const std::string y = text::trim(row[c_year]);
    if (!y.empty()) {
      try {
        year = std::stoi(y);
      } catch (const std::exception&) {
        throw SchemaError(where + ": bad year '" + y + "'");
      }
    }
    std::vector<double> values;
    for (const auto& tok : text::split_whitespace(row[c_values])) {
      try {
        values.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw SchemaError(where + ": bad value '" + tok + "'");
      }
    }
    s.add(text::trim(row[c_table]), text::trim(row[c_field]), year, std::move(values));
  }
  return s;
}

ReferenceStats ReferenceStats::from_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  return from_table(t.rows, t.header);
}

double ecdf(const std::vector<double>& sample, double x) {
  if (sample.empty()) throw ContractError("ecdf: empty sample");
  const auto n = std::count_if(sample.begin(), sample.end(), [&](double v) { return v <= x; });
  return static_cast<double>(n) / static_cast<double>(sample.size());
}

double quantile(std::vector<double> s, double q) {
  if (s.empty()) throw ContractError("quantile: empty sample");
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

Json to_json(const InfluenceDetail& d) {
  return Json{{"c_norm", d.c_norm},
              {"v_norm", d.v_norm},
              {"influence", d.influence},
              {"venue_metric", d.venue_metric},
              {"citation_fallback", d.citation_fallback},
              {"venue_fallback", d.venue_fallback}};
}

namespace {

double winsorized_rank(std::vector<double> sample, double x, double q) {
  const double cap = quantile(sample, q);
  for (auto& v : sample) v = std::min(v, cap);
  return ecdf(sample, std::min(x, cap));
}

std::optional<double> metric_value(const csac::IndexRecord& r, const std::string& table) {
  if (table == "impact_factor") return r.impact_factor;
  if (table == "conference_metric") return r.conference_metric;
  if (table == "two_year_rate") return r.two_year_rate;
  if (table == "long_run_rate") return r.long_run_rate;
  if (table == "repository_rate") return r.repository_rate;
  return std::nullopt;
}

}  // namespace

InfluenceDetail influence_score(const csac::IndexRecord& paper, const ReferenceStats& stats,
                                const std::vector<csac::IndexRecord>& pool, const CommitteeConfig& config) {
  InfluenceDetail d;
  const double count = static_cast<double>(paper.citation_count);
  const std::vector<double>* dist = paper.meta.year ? stats.find("citations", paper.field, paper.meta.year) : nullptr;
  if (dist) {
    d.c_norm = winsorized_rank(*dist, count, config.winsor_quantile);
  } else {
    d.citation_fallback = true;
    std::vector<double> sample;
    for (const auto& p : pool) sample.push_back(static_cast<double>(p.citation_count));
    if (sample.empty()) sample.push_back(count);
    d.c_norm = winsorized_rank(sample, count, config.winsor_quantile);
  }

  std::vector<std::string> chain;
  double scale = 1.0;
  switch (paper.venue_type) {
    case csac::VenueType::Journal: chain = {"impact_factor", "two_year_rate", "long_run_rate"}; break;
    case csac::VenueType::Conference: chain = {"conference_metric", "two_year_rate", "long_run_rate"}; break;
    case csac::VenueType::Preprint:
      chain = {"repository_rate"};
      scale = config.rho_preprint;
      break;
  }
  for (const auto& table : chain) {
    const auto value = metric_value(paper, table);
    if (!value) continue;
    d.venue_metric = table;
    if (const auto* vd = stats.find(table, paper.field, std::nullopt)) {
      d.v_norm = scale * ecdf(*vd, *value);
    } else {
      d.venue_fallback = true;
      std::vector<double> sample;
      for (const auto& p : pool) {
        if (auto v = metric_value(p, table)) sample.push_back(*v);
      }
      if (sample.empty()) sample.push_back(*value);
      d.v_norm = scale * ecdf(sample, *value);
    }
    break;
  }
  d.influence = config.w_citation * d.c_norm + config.w_venue * d.v_norm;
  return d;
}

void assign_credibility(std::vector<AspectCluster>& clusters, const std::vector<double>& influences) {
  double total = 0.0;
  for (auto& c : clusters) {
    c.support = 0.0;
    for (std::size_t p : c.papers) {
      if (p >= influences.size()) throw ContractError("assign_credibility: paper without an influence score");
      c.support += influences[p];
    }
    total += c.support;
  }
  for (auto& c : clusters) {
    c.gamma = total > 0.0 ? c.support / total : 1.0 / static_cast<double>(clusters.size());
  }
}

}  // namespace citecheck::icsv
