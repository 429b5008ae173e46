#include "citecheck/core.hpp"
#include "citecheck/errors.hpp"
#include "doctest.h"

using namespace citecheck;

TEST_SUITE("core") {
  TEST_CASE("precedence order is AT, CV, CM, SE, EC") {
    const auto& all = all_taxonomy_codes();
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(precedence_rank(all[i]) == static_cast<int>(i) + 1);
    CHECK(precedence_min({TaxonomyCode::EvidenceCharacterization, TaxonomyCode::ScopeExtrapolation}) ==
          TaxonomyCode::ScopeExtrapolation);
    CHECK(precedence_min({TaxonomyCode::ContentMisrepresentation, TaxonomyCode::CitationValidity,
                          TaxonomyCode::ContentMisrepresentation}) == TaxonomyCode::CitationValidity);
    CHECK_THROWS_AS(precedence_min({}), ContractError);
  }

  TEST_CASE("taxonomy codes parse from every spelling") {
    for (auto c : all_taxonomy_codes()) {
      CHECK(parse_taxonomy_code(to_string(c)) == c);
      CHECK(parse_taxonomy_code(benchmark_label(c)) == c);
    }
    CHECK(parse_taxonomy_code("se") == TaxonomyCode::ScopeExtrapolation);
    CHECK(parse_taxonomy_code("ATTRIBUTION_TRACEABILITY") == TaxonomyCode::AttributionTraceability);
    CHECK_FALSE(parse_taxonomy_code("Speculation"));
  }

  TEST_CASE("verdict invariants") {
    CHECK_THROWS_AS(Verdict::make(VerdictLabel::Supported, 1.5, Route::Accessible), ContractError);
    CHECK_THROWS_AS(Verdict::make(VerdictLabel::Supported, -0.1, Route::Accessible), ContractError);
    CHECK_THROWS_AS(Verdict::make(VerdictLabel::Supported, 0.9, Route::Accessible, TaxonomyCode::ScopeExtrapolation),
                    ContractError);
    CHECK_THROWS_AS(Verdict::make(VerdictLabel::Supported, 0.9, Route::Ghost), ContractError);
    const Verdict g = Verdict::ghost();
    CHECK(g.label == VerdictLabel::Miscitation);
    CHECK(g.route == Route::Ghost);
    CHECK(g.code == TaxonomyCode::AttributionTraceability);
    const Verdict m = Verdict::make(VerdictLabel::Miscitation, 0.7, Route::Inaccessible, TaxonomyCode::CitationValidity);
    CHECK(m.code == TaxonomyCode::CitationValidity);
  }

  TEST_CASE("audit bundle key order") {
    VerificationResult r;
    r.occurrence_id = "d#o1";
    r.target_key = "ref1";
    r.verdict = Verdict::make(VerdictLabel::Supported, 0.8, Route::Accessible);
    const Json j = to_audit_json(r);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    const std::vector<std::string> expected_prefix = {"occurrence_id", "route", "verdict", "confidence",
                                                      "taxonomy_code", "evidence", "token_usage", "stage_log"};
    REQUIRE(keys.size() >= expected_prefix.size());
    for (std::size_t i = 0; i < expected_prefix.size(); ++i) CHECK(keys[i] == expected_prefix[i]);
    CHECK(j.at("taxonomy_code").is_null());
  }

  TEST_CASE("aggregate_by_tag sums and sorts") {
    const auto rows = aggregate_by_tag({{10, 1, "b"}, {5, 2, "a"}, {1, 1, "b"}});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].call_tag == "a");
    CHECK(rows[1].input_tokens == 11);
    CHECK(rows[1].output_tokens == 2);
  }
}
