#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "citecheck/core.hpp"
#include "citecheck/csac.hpp"
#include "citecheck/dpcm.hpp"
#include "citecheck/gateway.hpp"

// Verification of citations to inaccessible sources through a committee of
// open-access papers that cite the same source.
namespace citecheck::icsv {

struct CommitteeConfig {
  int k_min = 6;
  double t_support = 0.3;
  double t_miscite = -0.3;
  double conf_min = 0.5;
  double h_max = 0.6;
  double w_citation = 0.6;
  double w_venue = 0.4;
  double rho_preprint = 0.85;
  double winsor_quantile = 0.99;
  double stability_cosine = 0.95;
  double dedup_cosine = 0.95;
  double witness_title_similarity = 0.9;
  int relation_runs = 3;
  std::int64_t seed = 0;

  void validate() const;
};

CommitteeConfig committee_config_from_json(const Json& j, CommitteeConfig base = {});
Json to_json(const CommitteeConfig& c);

// ---- claims ------------------------------------------------------------------

struct AtomicClaim {
  std::string text;
  int window_radius_used = 1;
  std::string occurrence_id;
};

Json to_json(const AtomicClaim& c);

// True when `s` is one sentence with no citation marker, year, or name from
// `author_families` (normalized).
bool claim_is_clean(const std::string& s, const std::vector<std::string>& author_families = {});

// Context window W_A at radius r: the cited sentence and r sentences either
// side within its paragraph; once the whole paragraph is covered, the next
// radius adds the neighboring paragraphs, which is the cap.
std::string context_window(const ParsedDocument& doc, std::size_t sentence_index, int radius);
// Largest radius that still changes the window.
int radius_cap(const ParsedDocument& doc, std::size_t sentence_index);

// Throws UnderspecifiedError when no two consecutive radii agree.
AtomicClaim extract_atomic_claim(const ParsedDocument& doc, const CitationEdge& edge, ModelClient& client,
                                 const CommitteeConfig& config, const std::vector<std::string>& author_families = {},
                                 const std::string& call_tag = "icsv/paraphrase");

// ---- committee ---------------------------------------------------------------

struct WitnessPaper {
  csac::IndexRecord record;
  std::string matched_entry;  // bibliography key of the target in the witness
  std::string matched_via;    // "doi" or "title"
  std::size_t mentions = 0;
  std::vector<AtomicClaim> claims;
};

struct Committee {
  std::vector<WitnessPaper> witnesses;
  std::size_t enumerated = 0;
  std::vector<std::pair<std::string, std::string>> rejected;  // (record id, reason)
  std::vector<std::string> warnings;
};

Json to_json(const Committee& c);

// Indices of the claims kept after near-duplicate collapse (first of each
// group wins): normalized-equal texts or embedding cosine >= threshold.
std::vector<std::size_t> dedupe_claims(const std::vector<std::string>& claims, ModelClient& client, double threshold,
                                       const std::string& call_tag = "icsv/dedup");

// Throws InconclusiveError when the metadata client fails.
Committee assemble_committee(const csac::IndexRecord& target, csac::MetadataClient& index, ModelClient& client,
                             const CommitteeConfig& config, const dpcm::StyleConfig& style = {});

// ---- clusters ----------------------------------------------------------------

struct ClaimRef {
  int id = 0;  // 1-based, as shown to the clustering prompt
  std::string text;
  std::size_t witness = 0;  // index into the committee
};

struct AspectCluster {
  std::string cluster_id;
  std::string cluster_name;
  std::string aspect_summary;
  std::vector<int> claim_ids;
  std::vector<std::size_t> papers;  // unique witness indices, ascending
  std::string evidence_statement;
  double support = 0.0;
  double gamma = 0.0;
};

Json to_json(const AspectCluster& c);

struct Clustering {
  std::vector<AspectCluster> clusters;
  bool degraded = false;
  int attempts = 0;
  std::vector<std::string> warnings;
};

// Empty string when `reply` is a valid partition of `ids`, else the reason.
std::string validate_partition(const Json& reply, const std::vector<int>& ids);

Clustering cluster_claims(const std::vector<ClaimRef>& claims, const MetadataSnapshot& target, ModelClient& client,
                          const std::string& call_tag = "icsv/cluster");

std::string distill_evidence(const AspectCluster& cluster, const std::vector<ClaimRef>& claims,
                             const MetadataSnapshot& target, ModelClient& client, std::vector<std::string>* warnings,
                             const std::string& call_tag = "icsv/distill");

// ---- influence ---------------------------------------------------------------

// Ingested distributions: one row per (table, field, year) with a sample of
// values. CSV columns: table, field_id, year, values (space separated).
// Tables: citations (per field and year), impact_factor, conference_metric,
// two_year_rate, long_run_rate, repository_rate (per field; year empty).
class ReferenceStats {
 public:
  static ReferenceStats from_csv(const std::string& path);
  static ReferenceStats from_table(const std::vector<std::vector<std::string>>& rows, const std::vector<std::string>& header);

  void add(const std::string& table, const std::string& field, std::optional<int> year, std::vector<double> values);
  const std::vector<double>* find(const std::string& table, const std::string& field, std::optional<int> year) const;
  bool empty() const { return tables_.empty(); }

 private:
  std::map<std::string, std::vector<double>> tables_;
};

// Fraction of `sample` at or below x.
double ecdf(const std::vector<double>& sample, double x);
// Linear-interpolated quantile, q in [0,1].
double quantile(std::vector<double> sample, double q);

struct InfluenceDetail {
  double c_norm = 0.0;
  double v_norm = 0.0;
  double influence = 0.0;
  std::string venue_metric;  // which input V_norm came from; empty if none
  bool citation_fallback = false;  // pool ECDF used for C_norm
  bool venue_fallback = false;     // pool ECDF used for V_norm
};

Json to_json(const InfluenceDetail& d);

// I = w_c C_norm + w_v V_norm. `pool` is the witness pool used when the
// reference table has no matching distribution.
InfluenceDetail influence_score(const csac::IndexRecord& paper, const ReferenceStats& stats,
                                const std::vector<csac::IndexRecord>& pool, const CommitteeConfig& config);

// Support_j = sum of influences over the cluster's unique papers;
// gamma_j = Support_j / sum Support, uniform when every support is zero.
void assign_credibility(std::vector<AspectCluster>& clusters, const std::vector<double>& influences);

// ---- relations and consensus ---------------------------------------------------

enum class Relation { Entails, Neutral, Contradicts };
std::string to_string(Relation r);
int vote_of(Relation r);
std::optional<Relation> parse_relation(const std::string& reply);

struct RelationResult {
  Relation label = Relation::Neutral;
  int vote = 0;
  double stability = 0.0;
  std::vector<Relation> runs;
  std::string justification;
  std::vector<std::string> warnings;
};

Json to_json(const RelationResult& r);

// Majority over runs; a three-way split with no repeated label is NEUTRAL.
RelationResult tally_relations(const std::vector<Relation>& runs);

RelationResult classify_relation(const std::string& claim, const std::string& evidence, ModelClient& client,
                                 const CommitteeConfig& config, const std::string& call_tag = "icsv/relation");

double aggregate_consensus(const std::vector<double>& gamma, const std::vector<int>& votes);
VerdictLabel provisional_verdict(double v_final, const CommitteeConfig& config);

enum class Trigger { InsufficientWitnesses, LowMargin, LowConfidence, HighDisagreement, UnderspecifiedClaim };
std::string to_string(Trigger t);

struct CommitteeVerdict {
  double v_final = 0.0;
  double n_eff = 0.0;
  double entropy = 0.0;
  double a_bar = 0.0;
  double conf = 0.0;
  VerdictLabel provisional = VerdictLabel::Undecidable;
  VerdictLabel label = VerdictLabel::Undecidable;
  std::vector<Trigger> triggers;
};

Json to_json(const CommitteeVerdict& v);

// n_eff = 1 / sum gamma^2; H = -sum_l w_l log(w_l + 1e-12) / log 3, clamped to
// [0,1]; a_bar = sum gamma_j a_j; conf = |v| min(1, n_eff / K_min) (1 - H) a_bar.
// Triggers in order: committee below K_min, |v_final| within the margin,
// conf below conf_min, H above h_max.
CommitteeVerdict calibrate_confidence(const std::vector<double>& gamma, const std::vector<int>& votes,
                                      const std::vector<double>& stability, double v_final,
                                      std::size_t committee_size, const CommitteeConfig& config);

// Aggregation followed by calibration.
CommitteeVerdict decide(const std::vector<double>& gamma, const std::vector<int>& votes,
                        const std::vector<double>& stability, std::size_t committee_size, const CommitteeConfig& config);

VerificationResult verify_inaccessible(const CitationEdge& edge, const std::string& target_key,
                                       const csac::IndexRecord& target, const ParsedDocument& citing_doc,
                                       csac::MetadataClient& index, ModelClient& client, const ReferenceStats& stats,
                                       const CommitteeConfig& config, const dpcm::StyleConfig& style = {});

}  // namespace citecheck::icsv
