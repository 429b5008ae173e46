#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace citecheck {

using Json = nlohmann::ordered_json;

// ---- taxonomy --------------------------------------------------------------

enum class TaxonomyCode {
  AttributionTraceability,
  CitationValidity,
  ContentMisrepresentation,
  ScopeExtrapolation,
  EvidenceCharacterization,
};

const std::array<TaxonomyCode, 5>& all_taxonomy_codes();

// 1 = checked first.
int precedence_rank(TaxonomyCode code);

// Member of `codes` with the smallest precedence rank. Duplicates are allowed;
// the argument is read as a set. Throws ContractError when empty.
TaxonomyCode precedence_min(const std::vector<TaxonomyCode>& codes);

std::string to_string(TaxonomyCode code);
// Long label used by the benchmark CSV ("Scope Extrapolation Error").
std::string benchmark_label(TaxonomyCode code);
// Accepts the enum spelling, UPPER_SNAKE, the benchmark label, or the
// two-letter abbreviation (AT, CV, CM, SE, EC). Case and '&' insensitive.
std::optional<TaxonomyCode> parse_taxonomy_code(std::string_view text);

// ---- verdicts --------------------------------------------------------------

enum class VerdictLabel { Supported, Miscitation, Undecidable };
enum class Route { Accessible, Inaccessible, Ghost };

std::string to_string(VerdictLabel label);
std::string to_string(Route route);
std::optional<VerdictLabel> parse_verdict_label(std::string_view text);
std::optional<Route> parse_route(std::string_view text);

struct Verdict {
  VerdictLabel label = VerdictLabel::Undecidable;
  double confidence = 0.0;
  Route route = Route::Accessible;
  // Present only on Miscitation verdicts.
  std::optional<TaxonomyCode> code;

  // Enforces confidence in [0,1], Ghost => Miscitation/AttributionTraceability,
  // and code only on Miscitation.
  static Verdict make(VerdictLabel label, double confidence, Route route,
                      std::optional<TaxonomyCode> code = std::nullopt);
  static Verdict ghost();
};

// ---- documents -------------------------------------------------------------

enum class BlockKind { Heading, Paragraph, DisplayMath, ListItem, Caption, BibEntry, Footnote };
enum class DocOrigin { Markup, Transcript };
enum class CitationStyle { Numeric, AuthorYear, Footnote };

std::string to_string(BlockKind kind);
std::string to_string(DocOrigin origin);
std::string to_string(CitationStyle style);
std::optional<CitationStyle> parse_citation_style(std::string_view text);

struct SourceSpan {
  int page = 0;  // 1-based; 0 when the source has no pages
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Block {
  BlockKind kind = BlockKind::Paragraph;
  int level = 0;  // headings only, 1..6
  std::string text;
  SourceSpan span;
  std::string key;  // bibliography entry key or footnote label
};

struct Sentence {
  std::string text;
  std::size_t block = 0;
  std::size_t index = 0;
  std::size_t begin = 0;  // byte offsets into the block text
  std::size_t end = 0;
};

struct Author {
  std::string family;
  std::string initials;
};

struct BibEntry {
  std::string key;
  std::vector<Author> authors;
  std::optional<int> year;
  std::string title;
  std::vector<std::string> title_tokens;
  std::string venue;
  std::optional<std::string> doi;
  std::optional<std::string> arxiv;
  int entry_index = 0;
  std::string raw;
  // Parsed from a footnote block rather than the reference list.
  bool footnote = false;
};

// One inline citation command in markup input.
struct Anchor {
  std::string occurrence_id;
  std::vector<std::string> keys;        // original order
  std::vector<std::string> unresolved;  // subset of keys with no bibliography entry
  std::string surface;
  std::size_t block = 0;
  std::size_t offset = 0;  // byte offset of the surface in the block text
};

struct ParsedDocument {
  std::string doc_id;
  DocOrigin origin = DocOrigin::Transcript;
  CitationStyle style = CitationStyle::Numeric;
  std::vector<Block> blocks;
  std::vector<Sentence> sentences;
  std::vector<Anchor> anchors;
  // Filled from markup metadata; transcripts go through parse_bibliography.
  std::vector<BibEntry> bibliography;
  std::vector<std::string> warnings;

  // Rebuilds `sentences` from the blocks. Headings, display math, and
  // bibliography entries carry no sentences.
  void index_sentences();
  // Sentence containing byte `offset` of block `block`, or the last sentence
  // starting before it.
  std::optional<std::size_t> sentence_at(std::size_t block, std::size_t offset) const;
  std::vector<std::size_t> sentences_of_block(std::size_t block) const;
};

struct CitationEdge {
  std::string occurrence_id;
  std::size_t sentence_index = 0;
  std::string surface_text;
  CitationStyle style = CitationStyle::Numeric;
  std::vector<std::string> target_keys;
  // Markers that found no entry: unknown markup keys, out-of-range indices,
  // author-year strings with no candidate.
  std::vector<std::string> unresolved_markers;
  bool ambiguity_flag = false;
  bool from_anchor = false;
  // Numeric indices or author-year parts as detected; alignment input.
  std::vector<int> indices;
  std::vector<std::string> parts;
  std::size_t block = 0;
  std::size_t offset = 0;
};

// ---- metadata and evidence -------------------------------------------------

struct MetadataSnapshot {
  std::string id;
  std::string title;
  std::vector<Author> authors;
  std::optional<std::string> abstract_text;
  std::string venue;
  std::optional<int> year;
  std::optional<std::string> doi;
  std::optional<std::string> arxiv;
  std::string source_of_record;
  bool retracted = false;
  std::string article_type;  // "article", "review", "meta-analysis", ...
};

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::string call_tag;

  TokenUsage& operator+=(const TokenUsage& other);
  std::int64_t total() const { return input_tokens + output_tokens; }
};

struct WindowEvidence {
  std::string text;
  std::size_t paragraph = 0;
  double retrieval_score = 0.0;
  double rerank_score = 0.0;
  double p_entail = 0.0;
  double p_neutral = 0.0;
  double p_contradict = 0.0;
};

struct EvidenceBundle {
  std::string citing_context;
  std::optional<std::vector<WindowEvidence>> accessible_evidence;
  std::optional<Json> committee_evidence;
  std::optional<MetadataSnapshot> metadata;
  std::string notes;
};

struct VerificationResult {
  std::string occurrence_id;
  std::string target_key;
  Verdict verdict;
  EvidenceBundle evidence;
  std::vector<TokenUsage> token_usage;
  Json trace = Json::object();
  std::vector<std::string> stage_log;
  std::optional<std::string> error;
};

// Token usage summed per call tag, tags sorted.
std::vector<TokenUsage> aggregate_by_tag(const std::vector<TokenUsage>& rows);

// ---- serialization ---------------------------------------------------------

Json to_json(const Author& a);
Json to_json(const BibEntry& e);
Json to_json(const ParsedDocument& doc);
Json to_json(const CitationEdge& e);
Json to_json(const MetadataSnapshot& m);
Json to_json(const EvidenceBundle& b);
Json to_json(const TokenUsage& u);
// Audit bundle: occurrence_id, route, verdict, confidence, taxonomy_code,
// evidence, token_usage, stage_log, followed by target_key, trace, error.
Json to_audit_json(const VerificationResult& r);

MetadataSnapshot metadata_from_json(const Json& j);
Author author_from_json(const Json& j);

}  // namespace citecheck
