#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "citecheck/core.hpp"
#include "citecheck/csac.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/gateway.hpp"

// One primary error code per detected miscitation.
namespace citecheck::taxonomy {

struct LabelerConfig {
  int samples = 5;
  double temperature = 0.7;
  std::int64_t seed = 0;
};

struct LabelDecision {
  TaxonomyCode code = TaxonomyCode::ContentMisrepresentation;
  std::string rationale;
  std::map<TaxonomyCode, int> votes;  // parseable samples only
  double confidence = 0.0;            // votes[code] / sum of votes
  // Set when the code followed from the route or metadata without a model call.
  std::optional<std::string> short_circuit;
  int unparseable = 0;
};

Json to_json(const LabelDecision& d);

// Every sample failed to parse; carries the raw replies.
class LabelingError : public Error {
 public:
  LabelingError(const std::string& message, std::vector<std::string> raw) : Error(message), raw_(std::move(raw)) {}
  const std::vector<std::string>& raw() const { return raw_; }

 private:
  std::vector<std::string> raw_;
};

// "Code: X" (any spelling parse_taxonomy_code accepts); the rationale line is optional.
std::optional<TaxonomyCode> parse_code_reply(const std::string& reply, std::string* rationale = nullptr);

// Strict majority; otherwise the most frequent code; remaining ties go to the
// code checked first. Unparseable samples are passed as nullopt and abstain.
// Throws ContractError when no vote is parseable.
LabelDecision decide_code(const std::vector<std::optional<TaxonomyCode>>& votes);

// Review, meta-analysis, and other secondary article types.
bool is_secondary_source(const MetadataSnapshot& m);

LabelDecision assign_error_code(const EvidenceBundle& bundle, const csac::AccessibilityVerdict& access,
                                ModelClient& client, const LabelerConfig& config = {},
                                const std::string& call_tag = "taxonomy");

}  // namespace citecheck::taxonomy
