#include <algorithm>
#include <regex>
#include <set>

#include "citecheck/errors.hpp"
#include "citecheck/icsv.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::icsv {

void CommitteeConfig::validate() const {
  if (k_min < 1) throw ConfigError("committee.k_min", "must be >= 1");
  if (!(t_support >= 0.0 && t_support < 1.0)) throw ConfigError("committee.t_support", "must lie in [0, 1)");
  if (!(t_miscite <= 0.0 && t_miscite > -1.0)) throw ConfigError("committee.t_miscite", "must lie in (-1, 0]");
  if (!(conf_min >= 0.0 && conf_min <= 1.0)) throw ConfigError("committee.conf_min", "must lie in [0, 1]");
  if (!(h_max >= 0.0 && h_max <= 1.0)) throw ConfigError("committee.h_max", "must lie in [0, 1]");
  if (!(w_citation >= 0.0 && w_venue >= 0.0) || std::abs(w_citation + w_venue - 1.0) > 1e-9)
    throw ConfigError("committee.w_citation", "influence weights must be non-negative and sum to 1");
  if (!(rho_preprint > 0.0 && rho_preprint <= 1.0)) throw ConfigError("committee.rho_preprint", "must lie in (0, 1]");
  if (!(winsor_quantile > 0.0 && winsor_quantile <= 1.0))
    throw ConfigError("committee.winsor_quantile", "must lie in (0, 1]");
  if (!(stability_cosine > 0.0 && stability_cosine <= 1.0))
    throw ConfigError("committee.stability_cosine", "must lie in (0, 1]");
  if (!(dedup_cosine > 0.0 && dedup_cosine <= 1.0)) throw ConfigError("committee.dedup_cosine", "must lie in (0, 1]");
  if (!(witness_title_similarity > 0.0 && witness_title_similarity <= 1.0))
    throw ConfigError("committee.witness_title_similarity", "must lie in (0, 1]");
  if (relation_runs < 1) throw ConfigError("committee.relation_runs", "must be >= 1");
}

CommitteeConfig committee_config_from_json(const Json& j, CommitteeConfig c) {
  if (!j.is_object()) throw ConfigError("committee", "must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "k_min") c.k_min = it->get<int>();
      else if (k == "t_support") c.t_support = it->get<double>();
      else if (k == "t_miscite") c.t_miscite = it->get<double>();
      else if (k == "conf_min") c.conf_min = it->get<double>();
      else if (k == "h_max") c.h_max = it->get<double>();
      else if (k == "w_citation") c.w_citation = it->get<double>();
      else if (k == "w_venue") c.w_venue = it->get<double>();
      else if (k == "rho_preprint") c.rho_preprint = it->get<double>();
      else if (k == "winsor_quantile") c.winsor_quantile = it->get<double>();
      else if (k == "stability_cosine") c.stability_cosine = it->get<double>();
      else if (k == "dedup_cosine") c.dedup_cosine = it->get<double>();
      else if (k == "witness_title_similarity") c.witness_title_similarity = it->get<double>();
      else if (k == "relation_runs") c.relation_runs = it->get<int>();
      else if (k == "seed") c.seed = it->get<std::int64_t>();
      else throw ConfigError("committee." + k, "unknown field");
    } catch (const Json::exception&) {
      throw ConfigError("committee." + k, "wrong type");
    }
  }
  c.validate();
  return c;
}

Json to_json(const CommitteeConfig& c) {
  return Json{{"k_min", c.k_min},
              {"t_support", c.t_support},
              {"t_miscite", c.t_miscite},
              {"conf_min", c.conf_min},
              {"h_max", c.h_max},
              {"w_citation", c.w_citation},
              {"w_venue", c.w_venue},
              {"rho_preprint", c.rho_preprint},
              {"winsor_quantile", c.winsor_quantile},
              {"stability_cosine", c.stability_cosine},
              {"dedup_cosine", c.dedup_cosine},
              {"witness_title_similarity", c.witness_title_similarity},
              {"relation_runs", c.relation_runs},
              {"seed", c.seed}};
}

Json to_json(const AtomicClaim& c) {
  return Json{{"text", c.text}, {"window_radius_used", c.window_radius_used}, {"occurrence_id", c.occurrence_id}};
}

bool claim_is_clean(const std::string& s, const std::vector<std::string>& author_families) {
  const std::string t = text::trim(s);
  if (t.empty()) return false;
  if (text::split_sentences(t).size() != 1) return false;
  static const std::regex kMarker(R"(\[\s*\^?\d+[^\]]*\]|\bet al\.)");
  static const std::regex kYear(R"(\b(?:1[89]|20)\d{2}[a-z]?\b)");
  if (std::regex_search(t, kMarker) || std::regex_search(t, kYear)) return false;
  if (!author_families.empty()) {
    const std::set<std::string> fams(author_families.begin(), author_families.end());
    for (const auto& w : text::split_whitespace(t)) {
      const std::string n = text::normalize_family_name(w);
      if (n.size() > 1 && fams.count(n)) return false;
    }
  }
  return true;
}

namespace {

struct ParagraphSpan {
  std::vector<std::size_t> sentences;  // global indices
  std::size_t position = 0;            // of the cited sentence
};

ParagraphSpan span_of(const ParsedDocument& doc, std::size_t sentence_index) {
  if (sentence_index >= doc.sentences.size()) throw ContractError("citation edge points outside the document");
  ParagraphSpan p;
  p.sentences = doc.sentences_of_block(doc.sentences[sentence_index].block);
  p.position = static_cast<std::size_t>(
      std::find(p.sentences.begin(), p.sentences.end(), sentence_index) - p.sentences.begin());
  return p;
}

// Nearest block before/after `block` that carries sentences.
std::optional<std::size_t> neighbor_block(const ParsedDocument& doc, std::size_t block, int dir) {
  std::optional<std::size_t> best;
  for (const auto& s : doc.sentences) {
    if (dir < 0 && s.block < block) best = s.block;
    if (dir > 0 && s.block > block) return s.block;
  }
  return best;
}

std::string join_sentences(const ParsedDocument& doc, const std::vector<std::size_t>& ids) {
  std::vector<std::string> parts;
  for (std::size_t i : ids) parts.push_back(doc.sentences[i].text);
  return text::join(parts, " ");
}

}  // namespace

int radius_cap(const ParsedDocument& doc, std::size_t sentence_index) {
  const ParagraphSpan p = span_of(doc, sentence_index);
  const std::size_t reach = std::max(p.position, p.sentences.size() - 1 - p.position);
  return static_cast<int>(std::max<std::size_t>(reach, 1)) + 1;
}

std::string context_window(const ParsedDocument& doc, std::size_t sentence_index, int radius) {
  if (radius < 1) throw ContractError("context_window: radius must be >= 1");
  const ParagraphSpan p = span_of(doc, sentence_index);
  const int cap = radius_cap(doc, sentence_index);
  if (radius < cap) {
    const std::size_t r = static_cast<std::size_t>(radius);
    const std::size_t lo = p.position >= r ? p.position - r : 0;
    const std::size_t hi = std::min(p.sentences.size(), p.position + r + 1);
    return join_sentences(doc, std::vector<std::size_t>(p.sentences.begin() + static_cast<std::ptrdiff_t>(lo),
                                                         p.sentences.begin() + static_cast<std::ptrdiff_t>(hi)));
  }
  const std::size_t block = doc.sentences[sentence_index].block;
  std::vector<std::string> paras;
  if (auto prev = neighbor_block(doc, block, -1)) paras.push_back(join_sentences(doc, doc.sentences_of_block(*prev)));
  paras.push_back(join_sentences(doc, p.sentences));
  if (auto next = neighbor_block(doc, block, +1)) paras.push_back(join_sentences(doc, doc.sentences_of_block(*next)));
  return text::join(paras, "\n\n");
}

namespace {

std::optional<std::string> paraphrase_at(const ParsedDocument& doc, const CitationEdge& edge, int radius,
                                         ModelClient& client, const std::vector<std::string>& families,
                                         const std::string& call_tag) {
  CompletionRequest req;
  req.system_text = std::string(prompts::paraphrase_system);
  req.user_text = text::fill_template(
      prompts::paraphrase_user,
      {{"W_A", context_window(doc, edge.sentence_index, radius)}, {"s_A", doc.sentences[edge.sentence_index].text}});
  req.decoding = DecodingConfig::deterministic(0);
  req.call_tag = call_tag;
  std::string reply = text::trim(text::strip_code_fence(client.complete(req).at(0).text));
  if (reply.find("INSUFFICIENT_CONTEXT") != std::string::npos) return std::nullopt;
  reply = text::trim(text::strip_citation_markers(reply));
  if (!claim_is_clean(reply, families)) return std::nullopt;
  return reply;
}

}  // namespace

AtomicClaim extract_atomic_claim(const ParsedDocument& doc, const CitationEdge& edge, ModelClient& client,
                                 const CommitteeConfig& config, const std::vector<std::string>& author_families,
                                 const std::string& call_tag) {
  if (edge.sentence_index >= doc.sentences.size())
    throw ContractError("extract_atomic_claim: edge is not resolved to a sentence");
  // The capped window may repeat; two radii are always tried so a stable
  // paraphrase of a short paragraph can still be confirmed.
  const int last = std::max(2, radius_cap(doc, edge.sentence_index));
  std::optional<std::string> previous;
  for (int r = 1; r <= last; ++r) {
    auto current = paraphrase_at(doc, edge, r, client, author_families, call_tag);
    if (previous && current) {
      bool stable = text::normalize_for_compare(*previous) == text::normalize_for_compare(*current);
      if (!stable) {
        const auto v = client.embed({*previous, *current}, "icsv/stability");
        stable = text::cosine(v.at(0), v.at(1)) >= config.stability_cosine;
      }
      if (stable) return AtomicClaim{*previous, r - 1, edge.occurrence_id};
    }
    previous = std::move(current);
  }
  throw UnderspecifiedError("no stable claim for " + edge.occurrence_id + " up to radius " + std::to_string(last));
}

// ---- committee ---------------------------------------------------------------

Json to_json(const Committee& c) {
  Json ws = Json::array();
  for (const auto& w : c.witnesses) {
    Json claims = Json::array();
    for (const auto& cl : w.claims) claims.push_back(to_json(cl));
    ws.push_back(Json{{"id", w.record.meta.id},
                      {"title", w.record.meta.title},
                      {"venue_type", csac::to_string(w.record.venue_type)},
                      {"citation_count", w.record.citation_count},
                      {"field", w.record.field},
                      {"year", w.record.meta.year ? Json(*w.record.meta.year) : Json(nullptr)},
                      {"matched_entry", w.matched_entry},
                      {"matched_via", w.matched_via},
                      {"mentions", w.mentions},
                      {"claims", claims}});
  }
  Json rej = Json::array();
  for (const auto& [id, why] : c.rejected) rej.push_back(Json{{"id", id}, {"reason", why}});
  return Json{{"enumerated", c.enumerated}, {"witnesses", ws}, {"rejected", rej}, {"warnings", c.warnings}};
}

std::vector<std::size_t> dedupe_claims(const std::vector<std::string>& claims, ModelClient& client, double threshold,
                                       const std::string& call_tag) {
  std::vector<std::size_t> kept;
  if (claims.empty()) return kept;
  const auto vecs = client.embed(claims, call_tag);
  for (std::size_t i = 0; i < claims.size(); ++i) {
    bool dup = false;
    for (std::size_t k : kept) {
      if (text::normalize_for_compare(claims[i]) == text::normalize_for_compare(claims[k]) ||
          text::cosine(vecs[i], vecs[k]) >= threshold) {
        dup = true;
        break;
      }
    }
    if (!dup) kept.push_back(i);
  }
  return kept;
}

namespace {

std::string lower_doi(const std::optional<std::string>& d) { return d ? text::to_lower(text::trim(*d)) : std::string(); }

std::string dedupe_key(const csac::IndexRecord& r) {
  const std::string d = lower_doi(r.meta.doi);
  return d.empty() ? "title:" + text::normalize_title(r.meta.title) : "doi:" + d;
}

struct WitnessOutcome {
  std::optional<WitnessPaper> paper;
  std::string reason;
  std::vector<std::string> warnings;
};

WitnessOutcome check_witness(const csac::IndexRecord& rec, const csac::IndexRecord& target,
                             csac::MetadataClient& index, ModelClient& client, const CommitteeConfig& config,
                             const dpcm::StyleConfig& style, const std::vector<std::string>& families) {
  WitnessOutcome out;
  if (!rec.open_access) {
    out.reason = "not open access";
    return out;
  }
  const auto path = index.full_text(rec);
  if (!path) {
    out.reason = "no retrievable full text";
    return out;
  }
  dpcm::ParseOutput parsed;
  try {
    parsed = dpcm::parse_path(*path, style, &client);
  } catch (const ParseError& e) {
    out.reason = std::string("unparseable: ") + e.what();
    return out;
  }
  const std::string target_doi = lower_doi(target.meta.doi);
  const BibEntry* match = nullptr;
  std::string via;
  for (const auto& e : parsed.entries) {
    if (!target_doi.empty() && lower_doi(e.doi) == target_doi) {
      match = &e;
      via = "doi";
      break;
    }
  }
  if (!match) {
    double best = 0.0;
    for (const auto& e : parsed.entries) {
      const double s = text::title_similarity(e.title, target.meta.title);
      if (s >= config.witness_title_similarity && s > best) {
        best = s;
        match = &e;
        via = "title";
      }
    }
  }
  if (!match) {
    out.reason = "target not in bibliography";
    return out;
  }
  std::vector<const CitationEdge*> mentions;
  for (const auto& edge : parsed.edges) {
    if (std::find(edge.target_keys.begin(), edge.target_keys.end(), match->key) != edge.target_keys.end())
      mentions.push_back(&edge);
  }
  if (mentions.empty()) {
    out.reason = "no in-text mention of the target";
    return out;
  }
  WitnessPaper w;
  w.record = rec;
  w.matched_entry = match->key;
  w.matched_via = via;
  w.mentions = mentions.size();
  std::vector<AtomicClaim> raw;
  for (const CitationEdge* edge : mentions) {
    try {
      raw.push_back(extract_atomic_claim(parsed.doc, *edge, client, config, families));
    } catch (const UnderspecifiedError& e) {
      out.warnings.push_back(rec.meta.id + ": " + e.what());
    }
  }
  std::vector<std::string> texts;
  for (const auto& c : raw) texts.push_back(c.text);
  for (std::size_t k : dedupe_claims(texts, client, config.dedup_cosine)) w.claims.push_back(raw[k]);
  if (w.claims.empty()) {
    out.reason = "no stable claim extracted";
    return out;
  }
  out.paper = std::move(w);
  return out;
}

}  // namespace

Committee assemble_committee(const csac::IndexRecord& target, csac::MetadataClient& index, ModelClient& client,
                             const CommitteeConfig& config, const dpcm::StyleConfig& style) {
  std::vector<csac::IndexRecord> works;
  try {
    works = index.citing_works(target);
  } catch (const TransportError& e) {
    throw InconclusiveError(std::string("citing works of '") + target.meta.id + "' unavailable: " + e.what());
  }
  Committee c;
  c.enumerated = works.size();
  std::vector<csac::IndexRecord> unique;
  std::set<std::string> seen;
  for (auto& w : works) {
    if (seen.insert(dedupe_key(w)).second)
      unique.push_back(std::move(w));
    else
      c.rejected.emplace_back(w.meta.id, "duplicate of an earlier citing work");
  }
  std::vector<std::string> families;
  for (const auto& a : target.meta.authors) families.push_back(text::normalize_family_name(a.family));

  auto outcomes = parallel_map(unique.size(), client.max_parallel(), [&](std::size_t i) {
    try {
      return check_witness(unique[i], target, index, client, config, style, families);
    } catch (const TransportError& e) {
      throw InconclusiveError("witness '" + unique[i].meta.id + "' unavailable: " + e.what());
    }
  });
  for (std::size_t i = 0; i < unique.size(); ++i) {
    auto& o = outcomes[i];
    c.warnings.insert(c.warnings.end(), o.warnings.begin(), o.warnings.end());
    if (o.paper)
      c.witnesses.push_back(std::move(*o.paper));
    else
      c.rejected.emplace_back(unique[i].meta.id, o.reason);
  }
  return c;
}

}  // namespace citecheck::icsv
