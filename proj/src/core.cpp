#include "citecheck/core.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "citecheck/errors.hpp"
#include "citecheck/text.hpp"

namespace citecheck {

const std::array<TaxonomyCode, 5>& all_taxonomy_codes() {
  static const std::array<TaxonomyCode, 5> kCodes = {
      TaxonomyCode::AttributionTraceability, TaxonomyCode::CitationValidity,
      TaxonomyCode::ContentMisrepresentation, TaxonomyCode::ScopeExtrapolation,
      TaxonomyCode::EvidenceCharacterization};
  return kCodes;
}

int precedence_rank(TaxonomyCode code) {
  switch (code) {
    case TaxonomyCode::AttributionTraceability: return 1;
    case TaxonomyCode::CitationValidity: return 2;
    case TaxonomyCode::ContentMisrepresentation: return 3;
    case TaxonomyCode::ScopeExtrapolation: return 4;
    case TaxonomyCode::EvidenceCharacterization: return 5;
  }
  throw ContractError("unknown taxonomy code");
}

TaxonomyCode precedence_min(const std::vector<TaxonomyCode>& codes) {
  if (codes.empty()) throw ContractError("precedence_min needs at least one code");
  return *std::min_element(codes.begin(), codes.end(), [](TaxonomyCode a, TaxonomyCode b) {
    return precedence_rank(a) < precedence_rank(b);
  });
}

std::string to_string(TaxonomyCode code) {
  switch (code) {
    case TaxonomyCode::AttributionTraceability: return "AttributionTraceability";
    case TaxonomyCode::CitationValidity: return "CitationValidity";
    case TaxonomyCode::ContentMisrepresentation: return "ContentMisrepresentation";
    case TaxonomyCode::ScopeExtrapolation: return "ScopeExtrapolation";
    case TaxonomyCode::EvidenceCharacterization: return "EvidenceCharacterization";
  }
  return "?";
}

std::string benchmark_label(TaxonomyCode code) {
  switch (code) {
    case TaxonomyCode::AttributionTraceability: return "Attribution & Traceability Error";
    case TaxonomyCode::CitationValidity: return "Citation Validity Error";
    case TaxonomyCode::ContentMisrepresentation: return "Content Misrepresentation Error";
    case TaxonomyCode::ScopeExtrapolation: return "Scope Extrapolation Error";
    case TaxonomyCode::EvidenceCharacterization: return "Evidence Characterization Error";
  }
  return "?";
}

std::optional<TaxonomyCode> parse_taxonomy_code(std::string_view text) {
  // Fold to lowercase letters only: "Attribution & Traceability Error" ->
  // "attributiontraceabilityerror".
  std::string key;
  for (char c : text) {
    if (std::isalpha(static_cast<unsigned char>(c))) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key.size() > 5 && key.compare(key.size() - 5, 5, "error") == 0) key.resize(key.size() - 5);
  static const std::map<std::string, TaxonomyCode> kNames = {
      {"attributiontraceability", TaxonomyCode::AttributionTraceability},
      {"attribution", TaxonomyCode::AttributionTraceability},
      {"at", TaxonomyCode::AttributionTraceability},
      {"citationvalidity", TaxonomyCode::CitationValidity},
      {"validity", TaxonomyCode::CitationValidity},
      {"cv", TaxonomyCode::CitationValidity},
      {"contentmisrepresentation", TaxonomyCode::ContentMisrepresentation},
      {"content", TaxonomyCode::ContentMisrepresentation},
      {"cm", TaxonomyCode::ContentMisrepresentation},
      {"scopeextrapolation", TaxonomyCode::ScopeExtrapolation},
      {"scope", TaxonomyCode::ScopeExtrapolation},
      {"se", TaxonomyCode::ScopeExtrapolation},
      {"evidencecharacterization", TaxonomyCode::EvidenceCharacterization},
      {"evidence", TaxonomyCode::EvidenceCharacterization},
      {"ec", TaxonomyCode::EvidenceCharacterization},
  };
  auto it = kNames.find(key);
  if (it == kNames.end()) return std::nullopt;
  return it->second;
}

std::string to_string(VerdictLabel label) {
  switch (label) {
    case VerdictLabel::Supported: return "Supported";
    case VerdictLabel::Miscitation: return "Miscitation";
    case VerdictLabel::Undecidable: return "Undecidable";
  }
  return "?";
}

std::string to_string(Route route) {
  switch (route) {
    case Route::Accessible: return "Accessible";
    case Route::Inaccessible: return "Inaccessible";
    case Route::Ghost: return "Ghost";
  }
  return "?";
}

std::optional<VerdictLabel> parse_verdict_label(std::string_view text) {
  const std::string t = text::to_lower(text::trim(text));
  if (t == "supported" || t == "support") return VerdictLabel::Supported;
  if (t == "miscitation" || t == "miscited") return VerdictLabel::Miscitation;
  if (t == "undecidable" || t == "undecided") return VerdictLabel::Undecidable;
  return std::nullopt;
}

std::optional<Route> parse_route(std::string_view text) {
  const std::string t = text::to_lower(text::trim(text));
  if (t == "accessible") return Route::Accessible;
  if (t == "inaccessible" || t == "metadataonly") return Route::Inaccessible;
  if (t == "ghost") return Route::Ghost;
  return std::nullopt;
}

Verdict Verdict::make(VerdictLabel label, double confidence, Route route, std::optional<TaxonomyCode> code) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw ContractError("verdict confidence outside [0,1]");
  if (route == Route::Ghost) {
    if (label != VerdictLabel::Miscitation) throw ContractError("ghost route requires a Miscitation verdict");
    if (code && *code != TaxonomyCode::AttributionTraceability)
      throw ContractError("ghost route requires AttributionTraceability");
    code = TaxonomyCode::AttributionTraceability;
  }
  if (code && label != VerdictLabel::Miscitation) throw ContractError("taxonomy code on a non-Miscitation verdict");
  Verdict v;
  v.label = label;
  v.confidence = confidence;
  v.route = route;
  v.code = code;
  return v;
}

Verdict Verdict::ghost() { return make(VerdictLabel::Miscitation, 1.0, Route::Ghost, TaxonomyCode::AttributionTraceability); }

std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Heading: return "heading";
    case BlockKind::Paragraph: return "paragraph";
    case BlockKind::DisplayMath: return "display_math";
    case BlockKind::ListItem: return "list_item";
    case BlockKind::Caption: return "caption";
    case BlockKind::BibEntry: return "bib_entry";
    case BlockKind::Footnote: return "footnote";
  }
  return "?";
}

std::string to_string(DocOrigin origin) { return origin == DocOrigin::Markup ? "markup" : "transcript"; }

std::string to_string(CitationStyle style) {
  switch (style) {
    case CitationStyle::Numeric: return "numeric";
    case CitationStyle::AuthorYear: return "author_year";
    case CitationStyle::Footnote: return "footnote";
  }
  return "?";
}

std::optional<CitationStyle> parse_citation_style(std::string_view text) {
  const std::string t = text::to_lower(text::trim(text));
  if (t == "numeric") return CitationStyle::Numeric;
  if (t == "author_year" || t == "author-year" || t == "authoryear") return CitationStyle::AuthorYear;
  if (t == "footnote") return CitationStyle::Footnote;
  return std::nullopt;
}

void ParsedDocument::index_sentences() {
  sentences.clear();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& blk = blocks[b];
    if (blk.kind == BlockKind::Heading || blk.kind == BlockKind::DisplayMath || blk.kind == BlockKind::BibEntry) continue;
    for (const auto& [begin, end] : text::sentence_spans(blk.text)) {
      Sentence s;
      s.text = blk.text.substr(begin, end - begin);
      s.block = b;
      s.index = sentences.size();
      s.begin = begin;
      s.end = end;
      sentences.push_back(std::move(s));
    }
  }
}

std::optional<std::size_t> ParsedDocument::sentence_at(std::size_t block, std::size_t offset) const {
  std::optional<std::size_t> best;
  for (const Sentence& s : sentences) {
    if (s.block != block) continue;
    if (s.begin <= offset) best = s.index;
    if (offset < s.end) break;
  }
  return best;
}

std::vector<std::size_t> ParsedDocument::sentences_of_block(std::size_t block) const {
  std::vector<std::size_t> out;
  for (const Sentence& s : sentences) {
    if (s.block == block) out.push_back(s.index);
  }
  return out;
}

TokenUsage& TokenUsage::operator+=(const TokenUsage& other) {
  input_tokens += other.input_tokens;
  output_tokens += other.output_tokens;
  return *this;
}

std::vector<TokenUsage> aggregate_by_tag(const std::vector<TokenUsage>& rows) {
  std::map<std::string, TokenUsage> by_tag;
  for (const auto& r : rows) {
    auto& slot = by_tag[r.call_tag];
    slot.call_tag = r.call_tag;
    slot += r;
  }
  std::vector<TokenUsage> out;
  for (auto& [_, u] : by_tag) out.push_back(u);
  return out;
}

Json to_json(const Author& a) { return Json{{"family", a.family}, {"initials", a.initials}}; }

Author author_from_json(const Json& j) {
  Author a;
  if (j.is_string()) {
    // "Family, I." or "I. Family"
    const std::string s = j.get<std::string>();
    const auto comma = s.find(',');
    if (comma != std::string::npos) {
      a.family = text::trim(s.substr(0, comma));
      a.initials = text::trim(s.substr(comma + 1));
    } else {
      auto parts = text::split_whitespace(s);
      if (!parts.empty()) {
        a.family = parts.back();
        parts.pop_back();
        a.initials = text::join(parts, " ");
      }
    }
    return a;
  }
  a.family = j.value("family", "");
  a.initials = j.value("initials", "");
  return a;
}

Json to_json(const BibEntry& e) {
  Json authors = Json::array();
  for (const auto& a : e.authors) authors.push_back(to_json(a));
  Json j{{"key", e.key}, {"entry_index", e.entry_index}, {"authors", authors}};
  j["year"] = e.year ? Json(*e.year) : Json(nullptr);
  j["title"] = e.title;
  j["title_tokens"] = e.title_tokens;
  j["venue"] = e.venue;
  j["doi"] = e.doi ? Json(*e.doi) : Json(nullptr);
  j["arxiv"] = e.arxiv ? Json(*e.arxiv) : Json(nullptr);
  j["raw"] = e.raw;
  return j;
}

Json to_json(const ParsedDocument& doc) {
  Json blocks = Json::array();
  for (const auto& b : doc.blocks) {
    Json jb{{"kind", to_string(b.kind)}};
    if (b.kind == BlockKind::Heading) jb["level"] = b.level;
    jb["text"] = b.text;
    jb["span"] = Json{{"page", b.span.page}, {"begin", b.span.begin}, {"end", b.span.end}};
    if (!b.key.empty()) jb["key"] = b.key;
    blocks.push_back(std::move(jb));
  }
  Json sentences = Json::array();
  for (const auto& s : doc.sentences) {
    sentences.push_back(Json{{"index", s.index}, {"block", s.block}, {"begin", s.begin}, {"end", s.end}, {"text", s.text}});
  }
  Json anchors = Json::array();
  for (const auto& a : doc.anchors) {
    anchors.push_back(Json{{"occurrence_id", a.occurrence_id},
                           {"keys", a.keys},
                           {"unresolved", a.unresolved},
                           {"surface", a.surface},
                           {"block", a.block},
                           {"offset", a.offset}});
  }
  Json bib = Json::array();
  for (const auto& e : doc.bibliography) bib.push_back(to_json(e));
  return Json{{"doc_id", doc.doc_id},   {"origin", to_string(doc.origin)}, {"style", to_string(doc.style)},
              {"blocks", blocks},       {"sentences", sentences},          {"anchors", anchors},
              {"bibliography", bib},    {"warnings", doc.warnings}};
}

Json to_json(const CitationEdge& e) {
  return Json{{"occurrence_id", e.occurrence_id},
              {"sentence_index", e.sentence_index},
              {"surface_text", e.surface_text},
              {"style", to_string(e.style)},
              {"target_keys", e.target_keys},
              {"unresolved_markers", e.unresolved_markers},
              {"ambiguity_flag", e.ambiguity_flag}};
}

Json to_json(const MetadataSnapshot& m) {
  Json authors = Json::array();
  for (const auto& a : m.authors) authors.push_back(to_json(a));
  Json j{{"id", m.id}, {"title", m.title}, {"authors", authors}};
  j["abstract"] = m.abstract_text ? Json(*m.abstract_text) : Json(nullptr);
  j["venue"] = m.venue;
  j["year"] = m.year ? Json(*m.year) : Json(nullptr);
  j["doi"] = m.doi ? Json(*m.doi) : Json(nullptr);
  j["arxiv"] = m.arxiv ? Json(*m.arxiv) : Json(nullptr);
  j["source_of_record"] = m.source_of_record;
  j["retracted"] = m.retracted;
  j["article_type"] = m.article_type;
  return j;
}

MetadataSnapshot metadata_from_json(const Json& j) {
  MetadataSnapshot m;
  m.id = j.value("id", "");
  m.title = j.value("title", "");
  if (j.contains("authors")) {
    for (const auto& a : j.at("authors")) m.authors.push_back(author_from_json(a));
  }
  if (j.contains("abstract") && j.at("abstract").is_string()) m.abstract_text = j.at("abstract").get<std::string>();
  m.venue = j.value("venue", "");
  if (j.contains("year") && j.at("year").is_number_integer()) m.year = j.at("year").get<int>();
  if (j.contains("doi") && j.at("doi").is_string()) m.doi = j.at("doi").get<std::string>();
  if (j.contains("arxiv") && j.at("arxiv").is_string()) m.arxiv = j.at("arxiv").get<std::string>();
  m.source_of_record = j.value("source_of_record", "");
  m.retracted = j.value("retracted", false);
  m.article_type = j.value("article_type", "");
  if (m.title.empty() && !m.doi && !m.arxiv) throw SchemaError("metadata record '" + m.id + "' has neither title nor identifier");
  return m;
}

Json to_json(const EvidenceBundle& b) {
  Json j{{"citing_context", b.citing_context}};
  if (b.accessible_evidence) {
    Json windows = Json::array();
    for (const auto& w : *b.accessible_evidence) {
      windows.push_back(Json{{"text", w.text},
                             {"paragraph", w.paragraph},
                             {"retrieval_score", w.retrieval_score},
                             {"rerank_score", w.rerank_score},
                             {"nli", Json{{"entail", w.p_entail}, {"neutral", w.p_neutral}, {"contradict", w.p_contradict}}}});
    }
    j["accessible_evidence"] = windows;
  } else {
    j["accessible_evidence"] = nullptr;
  }
  j["committee_evidence"] = b.committee_evidence ? *b.committee_evidence : Json(nullptr);
  j["metadata"] = b.metadata ? to_json(*b.metadata) : Json(nullptr);
  j["notes"] = b.notes;
  return j;
}

Json to_json(const TokenUsage& u) {
  return Json{{"call_tag", u.call_tag}, {"input_tokens", u.input_tokens}, {"output_tokens", u.output_tokens}};
}

Json to_audit_json(const VerificationResult& r) {
  Json usage = Json::array();
  for (const auto& u : aggregate_by_tag(r.token_usage)) usage.push_back(to_json(u));
  Json j;
  j["occurrence_id"] = r.occurrence_id;
  j["route"] = to_string(r.verdict.route);
  j["verdict"] = to_string(r.verdict.label);
  j["confidence"] = r.verdict.confidence;
  j["taxonomy_code"] = r.verdict.code ? Json(to_string(*r.verdict.code)) : Json(nullptr);
  j["evidence"] = to_json(r.evidence);
  j["token_usage"] = usage;
  j["stage_log"] = r.stage_log;
  j["target_key"] = r.target_key;
  j["trace"] = r.trace;
  j["error"] = r.error ? Json(*r.error) : Json(nullptr);
  return j;
}

}  // namespace citecheck
