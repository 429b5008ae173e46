#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "citecheck/core.hpp"
#include "citecheck/gateway.hpp"

// Verification against an accessible full text: dense retrieval, cross-encoder
// re-rank with sliding windows, an NLI gate with early exit and hypothesis
// expansion, then self-consistent adjudication by a reasoning model.
namespace citecheck::acsv {

struct FunnelConfig {
  int top_k = 10;
  int focus_n = 3;
  int window_size = 3;
  double tau_high = 0.9;
  int sc_samples = 5;
  double sc_temperature = 0.7;
  double safety_threshold = 0.6;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

FunnelConfig funnel_config_from_json(const Json& j, FunnelConfig base = {});
Json to_json(const FunnelConfig& c);

// A maximal run of sentences within one non-heading block.
struct Paragraph {
  std::size_t id = 0;  // block index in the cited document
  std::vector<std::string> sentences;
  std::string text() const;
};

std::vector<Paragraph> paragraphs_of(const ParsedDocument& doc);

struct RankedParagraph {
  Paragraph paragraph;
  double score = 0.0;
};

// Cosine ranking of every paragraph against the citing sentence; exactly
// min(top_k, M) results, ties in document order. Throws ContractError when
// the document has no paragraph.
std::vector<RankedParagraph> retrieve_candidates(const std::string& citing_sentence, const ParsedDocument& cited_doc,
                                                 ModelClient& client, const FunnelConfig& config);

struct EvidenceWindow {
  std::string text;
  std::size_t paragraph = 0;
  std::size_t first_sentence = 0;  // within the paragraph
  std::size_t sentence_count = 0;
  double retrieval_score = 0.0;
  double rerank_score = 0.0;
  NliDistribution nli;
};

// Start offsets of the stride-1 windows over `n` sentences: max(1, n - w + 1).
std::vector<std::size_t> window_starts(std::size_t n, std::size_t w);

// Top focus_n candidates by cross-encoder score (stable on ties), each sliced
// into windows.
std::vector<EvidenceWindow> rerank_and_window(const std::string& citing_sentence,
                                              const std::vector<RankedParagraph>& candidates, ModelClient& client,
                                              const FunnelConfig& config);

enum class Phase { Retrieval, Rerank, NliEarlyExit, Expanded, LrmAdjudicated };
std::string to_string(Phase p);

struct VoteTally {
  int supported = 0;
  int miscitation = 0;
  int undecidable = 0;
  int unparseable = 0;  // also counted in `undecidable`
};

struct FunnelTrace {
  Phase phase_reached = Phase::Retrieval;
  double m_entail = 0.0;
  double m_contradict = 0.0;
  std::optional<VoteTally> lrm_votes;
  double confidence = 0.0;
  bool conflict = false;  // both signals above tau_high in one pass
  bool expanded = false;
  int nli_calls = 0;
  std::size_t window_count = 0;
};

Json to_json(const FunnelTrace& t);

struct GateOutcome {
  bool early_exit = false;
  VerdictLabel label = VerdictLabel::Undecidable;  // meaningful on early exit
  FunnelTrace trace;
  std::string expanded_hypothesis;
};

// S_expanded: prev, cite, next joined by single spaces; empty neighbors dropped.
std::string expand_hypothesis(const std::string& prev, const std::string& cite, const std::string& next);

// Fills each window's `nli` with the distribution of the last pass run.
GateOutcome nli_gate(std::vector<EvidenceWindow>& windows, const std::string& citing_sentence, const std::string& prev,
                     const std::string& next, ModelClient& client, const FunnelConfig& config);

// Accepts "Verdict: X" or a bare label on its own line, case-insensitive;
// the last such line wins.
std::optional<VerdictLabel> parse_lrm_verdict(const std::string& reply);

struct Adjudication {
  VerdictLabel label = VerdictLabel::Undecidable;
  double confidence = 0.0;
  VoteTally votes;
  bool below_safety = false;
};

// Votes are tallied over {Supported, Miscitation, Undecidable}; a unique top
// count wins, otherwise Undecidable.
Adjudication tally_votes(const std::vector<std::optional<VerdictLabel>>& votes, double safety_threshold);

Adjudication adjudicate_deep(const std::string& expanded_hypothesis, const std::vector<std::string>& focus_passages,
                             ModelClient& client, const FunnelConfig& config, std::int64_t seed = 0);

std::vector<WindowEvidence> to_window_evidence(const std::vector<EvidenceWindow>& windows);

VerificationResult verify_accessible(const CitationEdge& edge, const std::string& target_key,
                                     const ParsedDocument& cited_doc, const ParsedDocument& citing_doc,
                                     ModelClient& client, const FunnelConfig& config, std::int64_t seed = 0);

}  // namespace citecheck::acsv
