#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include "citecheck/core.hpp"
#include "citecheck/gateway.hpp"
#include "citecheck/icsv.hpp"

// Benchmark loading, model-graded scoring, and the committee ablation.
namespace citecheck::eval {

enum class Difficulty { Surface, Deep };
std::string to_string(Difficulty d);
std::optional<Difficulty> parse_difficulty(std::string_view s);

struct BenchmarkInstance {
  std::string id;
  std::string miscitation_text;
  std::string explanation;
  std::string correct_statement;
  std::string original_text;
  TaxonomyCode miscite_type = TaxonomyCode::ContentMisrepresentation;
  Difficulty difficulty = Difficulty::Surface;
  std::string source_paper;
  std::string citing_context;
  std::optional<double> numeric_answer;
  std::size_t line = 0;
};

// Required columns: Miscitation, Explanation, Correct Statement, Original
// Text, Miscite Type, Difficulties. Optional: Id, Source Paper, Citing
// Context, Numeric Answer. Throws SchemaError naming the column or line.
std::vector<BenchmarkInstance> load_benchmark(const std::string& path);
std::vector<BenchmarkInstance> parse_benchmark(const std::string& csv_text);

struct Prediction {
  VerdictLabel verdict = VerdictLabel::Undecidable;
  std::optional<TaxonomyCode> code;
  std::string explanation;
  std::optional<double> numeric_answer;
};

// Benchmark label of a prediction: the code's long label for miscitations,
// otherwise the verdict name ("Undecidable", "Supported").
std::string predicted_label(const Prediction& p);

enum class Grade { Correct, Incorrect };
std::string to_string(Grade g);

struct GradedSample {
  std::string predicted_label;
  std::string predicted_explanation;
  Grade grade = Grade::Incorrect;
  bool grader_called = false;
  std::vector<std::string> warnings;
};

Json to_json(const GradedSample& g);

// |r - a| / max(1, |a|) < tol.
bool numeric_match(double reply, double answer, double tol = 0.01);

std::optional<Grade> parse_grade(const std::string& reply);

GradedSample grade_sample(const BenchmarkInstance& gold, const Prediction& prediction, ModelClient& grader,
                          std::int64_t seed = 0, const std::string& call_tag = "eval/grader");

// Mean over instances of "some sample is CORRECT". Throws ContractError
// unless every instance has exactly three samples.
double acc_pass_at_3(const std::vector<std::vector<Grade>>& grades);

struct LedgerEntry {
  std::string instance;
  std::int64_t tokens = 0;
  VerdictLabel verdict = VerdictLabel::Undecidable;
};

struct EconomyReport {
  double value = 0.0;
  std::size_t instances = 0;
  double mean_full_text = 0.0;
  double mean_agent = 0.0;
};

// 1 - mean(agent) / mean(full text) over instances where both methods gave
// Supported or Miscitation. Throws UndefinedResultError on an empty
// intersection or a zero full-text mean.
EconomyReport token_economy_report(const std::vector<LedgerEntry>& full_text, const std::vector<LedgerEntry>& agent);
double token_economy(const std::vector<LedgerEntry>& full_text, const std::vector<LedgerEntry>& agent);

// Prediction JSON: {"verdict", "code"?, "explanation"?, "numeric_answer"?}.
Prediction prediction_from_json(const Json& j);
// {"<instance id>": [three predictions], ...}; throws SchemaError.
std::vector<std::pair<std::string, std::vector<Prediction>>> predictions_from_json(const Json& j);
// [{"instance", "tokens", "verdict"}, ...]; throws SchemaError.
std::vector<LedgerEntry> ledger_from_json(const Json& j);

struct InstanceResult {
  std::string id;
  Difficulty difficulty = Difficulty::Surface;
  std::vector<GradedSample> samples;
  bool passed = false;
};

struct EvalReport {
  std::vector<InstanceResult> instances;
  double acc_pass_at_3 = 0.0;
  std::optional<double> acc_surface;  // absent when the split is empty
  std::optional<double> acc_deep;
  std::optional<EconomyReport> economy;
  std::int64_t grader_calls = 0;
};

// Grades every instance concurrently. Every instance needs exactly three
// predictions; missing or extra instances raise SchemaError.
EvalReport evaluate(const std::vector<BenchmarkInstance>& gold,
                    const std::vector<std::pair<std::string, std::vector<Prediction>>>& predictions,
                    ModelClient& grader, std::int64_t seed = 0);

Json to_json(const EvalReport& r);
// One row per metric: metric,value.
std::string metrics_csv(const EvalReport& r);

// ---- committee ablation ---------------------------------------------------------

struct SyntheticWitness {
  double influence = 0.0;
  std::vector<int> aspects;  // clusters this witness contributes claims to
};

struct SyntheticSource {
  std::string id;
  VerdictLabel truth = VerdictLabel::Supported;
  std::vector<int> aspect_votes;         // +1 / 0 / -1 per aspect
  std::vector<double> aspect_stability;  // a_j per aspect
  std::vector<SyntheticWitness> witnesses;
};

struct PoolOptions {
  int sources = 30;
  int aspects = 8;
  int min_witnesses = 25;
  int max_witnesses = 40;
  int min_extra_aspects = 2;  // non-dominant aspects per witness
  int max_extra_aspects = 4;
  double noise = 0.05;  // chance a non-dominant aspect votes NEUTRAL
  std::uint64_t seed = 7;
};

// Coherent committees: the dominant aspect is shared by every witness and
// votes with the planted truth; other aspects agree except for planted noise.
std::vector<SyntheticSource> synthetic_pool(const PoolOptions& options);

Json to_json(const SyntheticSource& s);
SyntheticSource synthetic_source_from_json(const Json& j);

// Witness indices in the dominant (highest-gamma) aspect of the full committee.
std::vector<std::size_t> dominant_witnesses(const SyntheticSource& s);

// Throws SchemaError for a source whose dominant aspect has fewer than
// `min_witnesses` distinct witnesses.
void validate_pool(const std::vector<SyntheticSource>& pool, int min_witnesses = 25);

// Consensus and calibration over a subset of the source's witnesses.
icsv::CommitteeVerdict evaluate_subcommittee(const SyntheticSource& s, const std::vector<std::size_t>& witnesses,
                                             const icsv::CommitteeConfig& config);

struct AblationRow {
  int n_voter = 0;
  double non_abstention_rate = 0.0;
  std::optional<double> conditional_accuracy;  // absent when nothing was decided
  double mean_conf = 0.0;
  int n_samples = 0;
};

// For each size, `trials` subsamples without replacement from the dominant
// aspect's witnesses, cycling through the pool.
std::vector<AblationRow> committee_ablation(const std::vector<SyntheticSource>& pool, const std::vector<int>& sizes,
                                            int trials, std::uint64_t seed, const icsv::CommitteeConfig& config = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);
Json to_json(const std::vector<AblationRow>& rows);

}  // namespace citecheck::eval
