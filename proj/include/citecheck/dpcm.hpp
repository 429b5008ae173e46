#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "citecheck/core.hpp"
#include "citecheck/gateway.hpp"

// Document parsing and citation mapping: markup normalization, page
// transcription and merging, extraction checks, citation detection,
// bibliography parsing, and citation-to-entry alignment.
namespace citecheck::dpcm {

struct StyleConfig {
  // Surface rendering of markup citations.
  CitationStyle style = CitationStyle::Numeric;
  std::vector<std::string> bibliography_headings = {"References", "Bibliography", "Works Cited", "Literature Cited",
                                                    "Reference List", "Literature"};
  // Directory for \bibliography{...} and \input lookups.
  std::string base_dir;
};

enum class MarkupKind { Auto, Latex, Xml };

// LaTeX-like or XML/HTML-like source to a ParsedDocument. Citation commands
// are rendered to their surface form and recorded as anchors. Throws
// ParseError on unbalanced groups or environments.
ParsedDocument normalize_markup(const std::string& source, const StyleConfig& style, const std::string& doc_id = "",
                                MarkupKind kind = MarkupKind::Auto);

// ---- pages -------------------------------------------------------------------

struct PageTranscript {
  int page_index = 1;
  std::string markdown;
  bool incomplete_start = false;
  bool incomplete_end = false;
};

// One transcript per page image, in input order, through the vision backend.
std::vector<PageTranscript> transcribe_pages(const std::vector<ImagePart>& pages, ModelClient& client,
                                             std::int64_t seed = 0, const std::string& call_tag = "dpcm/transcribe");

// Boundary heuristics on a single paragraph.
bool tail_is_complete(const std::string& paragraph);
bool head_is_continuation(const std::string& paragraph);
// Sets the incomplete_start / incomplete_end flags.
void tag_boundaries(std::vector<PageTranscript>& transcripts);
// Page text with <INCOMPLETE_START_Pn> / <INCOMPLETE_END_Pn> debug tags.
std::string tagged_view(const PageTranscript& t);

enum class BoundaryAction { None, Hyphen, Continuation, LlmRepair, LlmRejected, LlmMalformed };
std::string to_string(BoundaryAction a);

struct MergeResult {
  std::string text;
  // (byte offset, page index) at which each page's content starts in `text`.
  std::vector<std::pair<std::size_t, int>> page_starts;
  std::vector<BoundaryAction> boundaries;  // one per adjacent page pair
  std::vector<std::string> warnings;

  int page_at(std::size_t offset) const;
};

MergeResult merge_pages(std::vector<PageTranscript> transcripts, ModelClient* client,
                        const std::string& call_tag = "dpcm/boundary");

// Markdown transcript (merged or hand-made) to a ParsedDocument. Paragraphs
// after a bibliography heading become BibEntry blocks; "[^n]: ..." lines
// become Footnote blocks.
ParsedDocument parse_transcript(const std::string& markdown, const StyleConfig& style, const std::string& doc_id = "",
                                const MergeResult* pages = nullptr);

// ---- extraction checks ---------------------------------------------------------

enum class AnomalyKind { HeadingJump, NumberingGap, CitationSequenceGap, SuspiciousSegment };
std::string to_string(AnomalyKind k);

struct ExtractionAnomaly {
  AnomalyKind kind = AnomalyKind::SuspiciousSegment;
  std::size_t block_begin = 0;  // [begin, end) block indices
  std::size_t block_end = 0;
  int page_begin = 0;
  int page_end = 0;
  std::string detail;
};

Json to_json(const ExtractionAnomaly& a);

// Deterministic structural checks: heading jumps > 1 either way; equation and
// figure/table numbering gaps > 1, duplicates, or regressions; numeric
// citation sequences with > 10 consecutive missing indices or > 20% descending
// adjacent pairs.
std::vector<ExtractionAnomaly> verify_extraction(const ParsedDocument& doc);

struct ReparseReport {
  std::vector<int> reparsed_pages;
  std::vector<ExtractionAnomaly> resolved;
  std::vector<ExtractionAnomaly> remaining;
  bool spliced = false;
};

// Re-transcribes the pages around each anomaly and keeps the new page text
// only if that anomaly is gone afterwards. `transcripts` is updated in place.
ReparseReport localized_reparse(const std::vector<ImagePart>& pages, std::vector<PageTranscript>& transcripts,
                                ModelClient& client, const StyleConfig& style, std::int64_t seed = 0,
                                int max_attempts = 1);

// Audits each anomaly's surrounding blocks; suspicious labels become
// SuspiciousSegment anomalies.
std::vector<ExtractionAnomaly> semantic_audit(const ParsedDocument& doc, const std::vector<ExtractionAnomaly>& regions,
                                              ModelClient& client, const std::string& call_tag = "dpcm/audit");

// ---- citations -----------------------------------------------------------------

// "3–5, 7" -> {3,4,5,7}. Empty when the text is not a numeric list or
// contains 0 or a descending range.
std::vector<int> expand_numeric(const std::string& inner);

struct Detection {
  CitationStyle dominant_style = CitationStyle::Numeric;
  std::vector<CitationEdge> drafts;
};

// Markup documents yield drafts from anchors only; transcripts are scanned
// for numeric, author-year, and footnote markers.
Detection detect_citations(const ParsedDocument& doc);

struct BibliographyResult {
  std::vector<BibEntry> entries;
  std::vector<ExtractionAnomaly> anomalies;
};

BibliographyResult parse_bibliography(const ParsedDocument& doc);
// One reference string ("[7] A. Smith. Title. Venue, 2020.") to a BibEntry.
BibEntry parse_reference_string(const std::string& raw, int entry_index);

struct CitedAuthorYear {
  std::vector<std::string> families;  // normalized
  std::optional<int> year;
  std::string year_suffix;
};
std::optional<CitedAuthorYear> parse_author_year(const std::string& part);
// 0.5 name overlap + 0.3 year equality + 0.2 title-token overlap with the
// citing sentence.
double author_year_score(const CitedAuthorYear& cite, const BibEntry& entry, const std::string& sentence);

struct AlignOptions {
  double accept_threshold = 0.8;
  int max_candidates = 5;
  std::string call_tag = "dpcm/disambiguate";
  std::int64_t seed = 0;
};

std::vector<CitationEdge> align_citations(const std::vector<CitationEdge>& drafts, const std::vector<BibEntry>& entries,
                                          const ParsedDocument& doc, ModelClient* client,
                                          const AlignOptions& options = {});

// ---- whole-document entry point ------------------------------------------------

struct ParseOutput {
  ParsedDocument doc;
  std::vector<BibEntry> entries;
  std::vector<CitationEdge> edges;
  CitationStyle dominant_style = CitationStyle::Numeric;
  std::vector<ExtractionAnomaly> anomalies;
};

// Dispatches on extension: .tex/.latex, .xml/.html/.htm/.nxml (markup), .md/.markdown/.txt
// (transcript), or a directory of page images / per-page .md files.
ParseOutput parse_path(const std::string& path, const StyleConfig& style, ModelClient* client, std::int64_t seed = 0);
ParseOutput finish_parse(ParsedDocument doc, ModelClient* client, std::int64_t seed = 0);

Json to_json(const ParseOutput& out);

}  // namespace citecheck::dpcm
