#include "citecheck/taxonomy.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace citecheck;

namespace {

csac::AccessibilityVerdict accessible(const MetadataSnapshot& m) {
  csac::AccessibilityVerdict a;
  a.status = csac::AccessStatus::Accessible;
  csac::IndexRecord r;
  r.meta = m;
  a.record = r;
  return a;
}

Json taxonomy_rules(Json replies) {
  return Json{{"completions", Json::array({Json{{"tag", "taxonomy"}, {"replies", std::move(replies)}}})}};
}

}  // namespace

TEST_SUITE("taxonomy") {
  TEST_CASE("ghost citations are AT without a model call") {
    auto gw = testsupport::stub_gateway();
    ScopedClient client(*gw);
    csac::AccessibilityVerdict ghost;
    const auto d = taxonomy::assign_error_code(EvidenceBundle{}, ghost, client);
    CHECK(d.code == TaxonomyCode::AttributionTraceability);
    CHECK(d.short_circuit.has_value());
    CHECK(client.usage_report().total() == 0);
    CHECK(gw->ledger().empty());
  }

  TEST_CASE("retracted and secondary sources are CV without a model call") {
    auto gw = testsupport::stub_gateway();
    ScopedClient client(*gw);
    MetadataSnapshot m;
    m.title = "Retracted work";
    m.retracted = true;
    auto d = taxonomy::assign_error_code(EvidenceBundle{}, accessible(m), client);
    CHECK(d.code == TaxonomyCode::CitationValidity);
    m.retracted = false;
    m.article_type = "Meta-Analysis";
    d = taxonomy::assign_error_code(EvidenceBundle{}, accessible(m), client);
    CHECK(d.code == TaxonomyCode::CitationValidity);
    CHECK(client.usage_report().total() == 0);
  }

  TEST_CASE("ties resolve to the code checked first") {
    using C = TaxonomyCode;
    std::optional<C> se = C::ScopeExtrapolation, ec = C::EvidenceCharacterization, cm = C::ContentMisrepresentation;
    auto d = taxonomy::decide_code({ec, ec, se, se, std::nullopt});
    CHECK(d.code == C::ScopeExtrapolation);
    CHECK(d.confidence == doctest::Approx(0.5));
    CHECK(d.unparseable == 1);
    d = taxonomy::decide_code({ec, ec, ec, cm, se});
    CHECK(d.code == C::EvidenceCharacterization);
    d = taxonomy::decide_code({ec, cm, se});
    CHECK(d.code == C::ContentMisrepresentation);
    CHECK_THROWS_AS(taxonomy::decide_code({std::nullopt}), ContractError);
  }

  TEST_CASE("classifier samples are voted") {
    auto gw = testsupport::stub_gateway(taxonomy_rules(
        Json::array({"Code: SE\nRationale: broader than shown", "Code: EC", "Code: Scope Extrapolation Error",
                     "noise", "Code: scope_extrapolation"})));
    ScopedClient client(*gw);
    const auto d = taxonomy::assign_error_code(EvidenceBundle{}, accessible(MetadataSnapshot{}), client);
    CHECK(d.code == TaxonomyCode::ScopeExtrapolation);
    CHECK(d.unparseable == 1);
    CHECK(client.generation_samples() == 5);
  }

  TEST_CASE("all unparseable samples raise LabelingError with the raw replies") {
    auto gw = testsupport::stub_gateway(taxonomy_rules("I cannot decide."));
    ScopedClient client(*gw);
    try {
      taxonomy::assign_error_code(EvidenceBundle{}, accessible(MetadataSnapshot{}), client);
      FAIL("expected LabelingError");
    } catch (const taxonomy::LabelingError& e) {
      CHECK(e.raw().size() == 5);
      CHECK(e.raw()[0] == "I cannot decide.");
    }
  }

  TEST_CASE("code reply parsing") {
    std::string why;
    CHECK(taxonomy::parse_code_reply("Code: CM\nRationale: numbers differ", &why) ==
          TaxonomyCode::ContentMisrepresentation);
    CHECK(why.find("numbers differ") != std::string::npos);
    CHECK(taxonomy::parse_code_reply("code: Attribution & Traceability Error") ==
          TaxonomyCode::AttributionTraceability);
    CHECK_FALSE(taxonomy::parse_code_reply("Code: Unknown"));
  }
}
