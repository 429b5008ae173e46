#include "citecheck/taxonomy.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::taxonomy {

Json to_json(const LabelDecision& d) {
  Json votes = Json::object();
  for (const auto& [code, n] : d.votes) votes[to_string(code)] = n;
  return Json{{"code", to_string(d.code)},
              {"rationale", d.rationale},
              {"votes", votes},
              {"confidence", d.confidence},
              {"short_circuit", d.short_circuit ? Json(*d.short_circuit) : Json(nullptr)},
              {"unparseable", d.unparseable}};
}

std::optional<TaxonomyCode> parse_code_reply(const std::string& reply, std::string* rationale) {
  static const std::regex kCode(R"(^\s*\**\s*Code\s*\**\s*:\s*\**\s*([^*\n]+?)\s*\**\s*$)", std::regex::icase);
  static const std::regex kRationale(R"(^\s*\**\s*Rationale\s*\**\s*:\s*(.*)$)", std::regex::icase);
  std::optional<TaxonomyCode> code;
  for (const auto& raw : text::split(text::strip_code_fence(reply), '\n')) {
    std::smatch m;
    const std::string line = text::trim(raw);
    if (!code && std::regex_match(line, m, kCode)) {
      code = parse_taxonomy_code(text::trim(m[1].str()));
    } else if (rationale && std::regex_match(line, m, kRationale)) {
      *rationale = text::trim(m[1].str());
    }
  }
  return code;
}

LabelDecision decide_code(const std::vector<std::optional<TaxonomyCode>>& votes) {
  LabelDecision d;
  int total = 0;
  for (const auto& v : votes) {
    if (!v) {
      ++d.unparseable;
      continue;
    }
    ++d.votes[*v];
    ++total;
  }
  if (total == 0) throw ContractError("decide_code: no parseable votes");
  int best = 0;
  for (const auto& [code, n] : d.votes) best = std::max(best, n);
  std::vector<TaxonomyCode> leaders;
  for (const auto& [code, n] : d.votes) {
    if (n == best) leaders.push_back(code);
  }
  // A strict majority has a single leader, so one precedence pass covers all three rules.
  d.code = precedence_min(leaders);
  d.confidence = static_cast<double>(best) / static_cast<double>(total);
  return d;
}

bool is_secondary_source(const MetadataSnapshot& m) {
  static const std::set<std::string> kSecondary = {"review", "systematic-review", "systematic review", "meta-analysis",
                                                   "meta analysis", "survey", "editorial", "secondary"};
  return kSecondary.count(text::to_lower(text::trim(m.article_type))) > 0;
}

LabelDecision assign_error_code(const EvidenceBundle& bundle, const csac::AccessibilityVerdict& access,
                                ModelClient& client, const LabelerConfig& config, const std::string& call_tag) {
  if (access.status == csac::AccessStatus::Ghost) {
    LabelDecision d;
    d.code = TaxonomyCode::AttributionTraceability;
    d.votes[d.code] = 1;
    d.confidence = 1.0;
    d.short_circuit = "ghost citation";
    d.rationale = "the reference does not resolve to any indexed source";
    return d;
  }
  const MetadataSnapshot* meta = bundle.metadata ? &*bundle.metadata : (access.record ? &access.record->meta : nullptr);
  if (meta && (meta->retracted || is_secondary_source(*meta))) {
    LabelDecision d;
    d.code = TaxonomyCode::CitationValidity;
    d.votes[d.code] = 1;
    d.confidence = 1.0;
    d.short_circuit = meta->retracted ? "source is retracted" : "source is a secondary work (" + meta->article_type + ")";
    d.rationale = *d.short_circuit;
    return d;
  }

  std::string evidence;
  if (bundle.accessible_evidence) {
    for (const auto& w : *bundle.accessible_evidence) evidence += "- " + w.text + "\n";
  }
  if (bundle.committee_evidence && bundle.committee_evidence->contains("clustering")) {
    for (const auto& c : bundle.committee_evidence->at("clustering").at("clusters"))
      evidence += "- " + c.value("evidence_statement", "") + "\n";
  }
  if (evidence.empty()) evidence = "(none)";
  const Json meta_json = meta ? to_json(*meta) : Json::object();

  CompletionRequest req;
  req.system_text = std::string(prompts::taxonomy_system);
  req.user_text = text::fill_template(prompts::taxonomy_user, {{"CITING_CONTEXT", bundle.citing_context},
                                                               {"EVIDENCE", text::trim(evidence)},
                                                               {"METADATA", meta_json.dump(2)}});
  req.decoding = DecodingConfig::self_consistency(config.samples, config.temperature, config.seed);
  req.call_tag = call_tag;
  const auto replies = client.complete(req);
  std::vector<std::optional<TaxonomyCode>> votes;
  std::vector<std::string> rationales(replies.size());
  std::vector<std::string> raw;
  for (std::size_t i = 0; i < replies.size(); ++i) {
    votes.push_back(parse_code_reply(replies[i].text, &rationales[i]));
    raw.push_back(replies[i].text);
  }
  if (std::none_of(votes.begin(), votes.end(), [](const auto& v) { return v.has_value(); }))
    throw LabelingError("taxonomy: no classifier sample could be parsed", raw);
  LabelDecision d = decide_code(votes);
  for (std::size_t i = 0; i < votes.size(); ++i) {
    if (votes[i] == d.code && !rationales[i].empty()) {
      d.rationale = rationales[i];
      break;
    }
  }
  return d;
}

}  // namespace citecheck::taxonomy
