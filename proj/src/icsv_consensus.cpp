#include <algorithm>
#include <array>
#include <cmath>
#include <regex>

#include "citecheck/errors.hpp"
#include "citecheck/icsv.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::icsv {

std::string to_string(Relation r) {
  switch (r) {
    case Relation::Entails: return "ENTAILS";
    case Relation::Neutral: return "NEUTRAL";
    case Relation::Contradicts: return "CONTRADICTS";
  }
  return "NEUTRAL";
}

int vote_of(Relation r) {
  switch (r) {
    case Relation::Entails: return 1;
    case Relation::Neutral: return 0;
    case Relation::Contradicts: return -1;
  }
  return 0;
}

namespace {

std::optional<Relation> relation_word(const std::string& s) {
  const std::string t = text::to_lower(text::trim(s));
  if (t == "entails" || t == "entail" || t == "entailment") return Relation::Entails;
  if (t == "contradicts" || t == "contradict" || t == "contradiction") return Relation::Contradicts;
  if (t == "neutral") return Relation::Neutral;
  return std::nullopt;
}

}  // namespace

std::optional<Relation> parse_relation(const std::string& reply) {
  const std::string s = text::strip_code_fence(reply);
  const auto open = s.find('{');
  const auto close = s.rfind('}');
  if (open != std::string::npos && close != std::string::npos && close > open) {
    try {
      const Json j = Json::parse(s.substr(open, close - open + 1));
      if (j.is_object() && j.contains("label") && j.at("label").is_string()) return relation_word(j.at("label"));
    } catch (const Json::exception&) {
    }
  }
  // A bare label is accepted only when exactly one label word is present.
  static const std::regex kWord(R"(\b(ENTAILS|CONTRADICTS|NEUTRAL)\b)");
  std::optional<Relation> found;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kWord); it != std::sregex_iterator(); ++it) {
    const auto r = relation_word((*it)[1].str());
    if (found && r != found) return std::nullopt;
    found = r;
  }
  return found;
}

Json to_json(const RelationResult& r) {
  Json runs = Json::array();
  for (auto x : r.runs) runs.push_back(to_string(x));
  return Json{{"label", to_string(r.label)},
              {"vote", r.vote},
              {"stability", r.stability},
              {"runs", runs},
              {"justification", r.justification},
              {"warnings", r.warnings}};
}

RelationResult tally_relations(const std::vector<Relation>& runs) {
  if (runs.empty()) throw ContractError("tally_relations: no runs");
  std::array<int, 3> counts{0, 0, 0};
  for (auto r : runs) ++counts[static_cast<std::size_t>(r)];
  const int top = *std::max_element(counts.begin(), counts.end());
  const auto winners = std::count(counts.begin(), counts.end(), top);
  RelationResult out;
  out.runs = runs;
  out.label = Relation::Neutral;
  if (winners == 1) {
    out.label = static_cast<Relation>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  out.vote = vote_of(out.label);
  out.stability = static_cast<double>(counts[static_cast<std::size_t>(out.label)]) / static_cast<double>(runs.size());
  return out;
}

RelationResult classify_relation(const std::string& claim, const std::string& evidence, ModelClient& client,
                                 const CommitteeConfig& config, const std::string& call_tag) {
  if (text::trim(claim).empty() || text::trim(evidence).empty())
    throw ContractError("classify_relation: claim and evidence must be non-empty");
  std::vector<Relation> runs;
  std::vector<std::string> warnings;
  std::string justification;
  for (int i = 0; i < config.relation_runs; ++i) {
    CompletionRequest req;
    req.system_text = std::string(prompts::relation_system);
    req.user_text = text::fill_template(prompts::relation_user, {{"c_A", claim}, {"e_j", evidence}});
    req.decoding = DecodingConfig::deterministic(config.seed + i);
    req.call_tag = call_tag;
    const std::string reply = client.complete(req).at(0).text;
    const auto r = parse_relation(reply);
    if (!r) warnings.push_back("relation run " + std::to_string(i + 1) + " unparseable; counted as NEUTRAL");
    runs.push_back(r.value_or(Relation::Neutral));
    if (justification.empty()) {
      const std::string s = text::strip_code_fence(reply);
      const auto open = s.find('{');
      const auto close = s.rfind('}');
      if (open != std::string::npos && close != std::string::npos && close > open) {
        try {
          const Json j = Json::parse(s.substr(open, close - open + 1));
          if (j.is_object()) justification = j.value("justification", "");
        } catch (const Json::exception&) {
        }
      }
    }
  }
  RelationResult out = tally_relations(runs);
  out.justification = justification;
  out.warnings = std::move(warnings);
  return out;
}

double aggregate_consensus(const std::vector<double>& gamma, const std::vector<int>& votes) {
  if (gamma.size() != votes.size()) throw ContractError("aggregate_consensus: one vote per cluster required");
  double v = 0.0;
  for (std::size_t j = 0; j < gamma.size(); ++j) v += static_cast<double>(votes[j]) * gamma[j];
  // Rounding in a sum of gammas can overshoot |v| = 1 by an ulp.
  return std::clamp(v, -1.0, 1.0);
}

VerdictLabel provisional_verdict(double v_final, const CommitteeConfig& config) {
  if (v_final > config.t_support) return VerdictLabel::Supported;
  if (v_final < config.t_miscite) return VerdictLabel::Miscitation;
  return VerdictLabel::Undecidable;
}

std::string to_string(Trigger t) {
  switch (t) {
    case Trigger::InsufficientWitnesses: return "InsufficientWitnesses";
    case Trigger::LowMargin: return "LowMargin";
    case Trigger::LowConfidence: return "LowConfidence";
    case Trigger::HighDisagreement: return "HighDisagreement";
    case Trigger::UnderspecifiedClaim: return "UnderspecifiedClaim";
  }
  return "LowConfidence";
}

Json to_json(const CommitteeVerdict& v) {
  Json triggers = Json::array();
  for (auto t : v.triggers) triggers.push_back(to_string(t));
  return Json{{"v_final", v.v_final},
              {"n_eff", v.n_eff},
              {"entropy", v.entropy},
              {"a_bar", v.a_bar},
              {"conf", v.conf},
              {"provisional", to_string(v.provisional)},
              {"verdict", to_string(v.label)},
              {"abstention_triggers", triggers}};
}

CommitteeVerdict calibrate_confidence(const std::vector<double>& gamma, const std::vector<int>& votes,
                                      const std::vector<double>& stability, double v_final,
                                      std::size_t committee_size, const CommitteeConfig& config) {
  if (gamma.empty() || gamma.size() != votes.size() || gamma.size() != stability.size())
    throw ContractError("calibrate_confidence: gamma, votes, and stability must be non-empty and aligned");
  CommitteeVerdict out;
  out.v_final = v_final;
  out.provisional = provisional_verdict(v_final, config);

  double sum_sq = 0.0;
  std::array<double, 3> mass{0.0, 0.0, 0.0};  // +1, 0, -1
  double a_bar = 0.0;
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    sum_sq += gamma[j] * gamma[j];
    mass[static_cast<std::size_t>(1 - votes[j])] += gamma[j];
    a_bar += gamma[j] * stability[j];
  }
  out.n_eff = 1.0 / sum_sq;
  double h = 0.0;
  for (double w : mass) h -= w * std::log(w + 1e-12);
  h /= std::log(3.0);
  out.entropy = std::clamp(h, 0.0, 1.0);
  out.a_bar = a_bar;
  const double sufficiency = std::min(1.0, out.n_eff / static_cast<double>(config.k_min));
  out.conf = std::abs(v_final) * sufficiency * (1.0 - out.entropy) * a_bar;

  if (committee_size < static_cast<std::size_t>(config.k_min)) out.triggers.push_back(Trigger::InsufficientWitnesses);
  if (v_final >= config.t_miscite && v_final <= config.t_support) out.triggers.push_back(Trigger::LowMargin);
  if (out.conf < config.conf_min) out.triggers.push_back(Trigger::LowConfidence);
  if (out.entropy > config.h_max) out.triggers.push_back(Trigger::HighDisagreement);
  out.label = out.triggers.empty() ? out.provisional : VerdictLabel::Undecidable;
  return out;
}

CommitteeVerdict decide(const std::vector<double>& gamma, const std::vector<int>& votes,
                        const std::vector<double>& stability, std::size_t committee_size,
                        const CommitteeConfig& config) {
  return calibrate_confidence(gamma, votes, stability, aggregate_consensus(gamma, votes), committee_size, config);
}

namespace {

VerificationResult abstain(VerificationResult r, Trigger t, const std::string& note) {
  r.verdict = Verdict::make(VerdictLabel::Undecidable, 0.0, Route::Inaccessible);
  r.stage_log.push_back(note);
  Json& ev = *r.evidence.committee_evidence;
  ev["verdict"] = Json{{"verdict", "Undecidable"}, {"abstention_triggers", Json::array({to_string(t)})}};
  r.trace = Json{{"abstention_triggers", Json::array({to_string(t)})}};
  r.evidence.notes = note;
  return r;
}

}  // namespace

VerificationResult verify_inaccessible(const CitationEdge& edge, const std::string& target_key,
                                       const csac::IndexRecord& target, const ParsedDocument& citing_doc,
                                       csac::MetadataClient& index, ModelClient& client, const ReferenceStats& stats,
                                       const CommitteeConfig& config, const dpcm::StyleConfig& style) {
  config.validate();
  VerificationResult r;
  r.occurrence_id = edge.occurrence_id;
  r.target_key = target_key;
  r.evidence.metadata = target.meta;
  r.evidence.committee_evidence = Json::object();
  if (edge.sentence_index < citing_doc.sentences.size())
    r.evidence.citing_context = citing_doc.sentences[edge.sentence_index].text;

  std::vector<std::string> families;
  for (const auto& a : target.meta.authors) families.push_back(text::normalize_family_name(a.family));

  AtomicClaim claim;
  try {
    claim = extract_atomic_claim(citing_doc, edge, client, config, families);
  } catch (const UnderspecifiedError& e) {
    return abstain(std::move(r), Trigger::UnderspecifiedClaim, std::string("claim underspecified: ") + e.what());
  }
  Json& ev = *r.evidence.committee_evidence;
  ev["claim"] = to_json(claim);
  r.stage_log.push_back("claim: radius " + std::to_string(claim.window_radius_used));

  Committee committee = assemble_committee(target, index, client, config, style);
  ev["committee"] = to_json(committee);
  r.stage_log.push_back("committee: " + std::to_string(committee.witnesses.size()) + " of " +
                        std::to_string(committee.enumerated) + " citing works admitted");
  if (committee.witnesses.empty()) {
    return abstain(std::move(r), Trigger::InsufficientWitnesses, "no witness papers; no evidence to weigh");
  }

  std::vector<ClaimRef> refs;
  for (std::size_t w = 0; w < committee.witnesses.size(); ++w) {
    for (const auto& c : committee.witnesses[w].claims)
      refs.push_back(ClaimRef{static_cast<int>(refs.size()) + 1, c.text, w});
  }
  Clustering clustering = cluster_claims(refs, target.meta, client);
  r.stage_log.push_back("clusters: " + std::to_string(clustering.clusters.size()) +
                        (clustering.degraded ? " (degraded singleton fallback)" : ""));

  std::vector<std::vector<std::string>> distill_warnings(clustering.clusters.size());
  const auto statements = parallel_map(clustering.clusters.size(), client.max_parallel(), [&](std::size_t j) {
    return distill_evidence(clustering.clusters[j], refs, target.meta, client, &distill_warnings[j]);
  });
  for (std::size_t j = 0; j < statements.size(); ++j) {
    clustering.clusters[j].evidence_statement = statements[j];
    clustering.warnings.insert(clustering.warnings.end(), distill_warnings[j].begin(), distill_warnings[j].end());
  }

  std::vector<csac::IndexRecord> pool;
  for (const auto& w : committee.witnesses) pool.push_back(w.record);
  std::vector<double> influences;
  Json infl = Json::array();
  for (const auto& w : committee.witnesses) {
    const InfluenceDetail d = influence_score(w.record, stats, pool, config);
    influences.push_back(d.influence);
    Json jd = to_json(d);
    jd["id"] = w.record.meta.id;
    infl.push_back(jd);
  }
  ev["influence"] = infl;
  assign_credibility(clustering.clusters, influences);

  const auto relations = parallel_map(clustering.clusters.size(), client.max_parallel(), [&](std::size_t j) {
    return classify_relation(claim.text, clustering.clusters[j].evidence_statement, client, config);
  });
  std::vector<double> gamma;
  std::vector<int> votes;
  std::vector<double> stability;
  Json clusters = Json::array();
  for (std::size_t j = 0; j < relations.size(); ++j) {
    gamma.push_back(clustering.clusters[j].gamma);
    votes.push_back(relations[j].vote);
    stability.push_back(relations[j].stability);
    Json jc = to_json(clustering.clusters[j]);
    jc["relation"] = to_json(relations[j]);
    clusters.push_back(jc);
  }
  ev["clustering"] = Json{{"degraded", clustering.degraded},
                          {"attempts", clustering.attempts},
                          {"warnings", clustering.warnings},
                          {"clusters", clusters}};

  const CommitteeVerdict cv = decide(gamma, votes, stability, committee.witnesses.size(), config);
  ev["verdict"] = to_json(cv);
  r.trace = to_json(cv);
  r.stage_log.push_back("consensus: v_final " + std::to_string(cv.v_final) + ", conf " + std::to_string(cv.conf) +
                        ", " + to_string(cv.label));
  if (clustering.degraded) r.evidence.notes = "clustering fell back to singleton clusters";
  r.verdict = Verdict::make(cv.label, std::clamp(cv.conf, 0.0, 1.0), Route::Inaccessible);
  return r;
}

}  // namespace citecheck::icsv
