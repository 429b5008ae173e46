#include <cmath>

#include "citecheck/dpcm.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/icsv.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace citecheck;

namespace {

std::vector<std::string> trigger_names(const icsv::CommitteeVerdict& v) {
  std::vector<std::string> out;
  for (auto t : v.triggers) out.push_back(icsv::to_string(t));
  return out;
}

bool has(const icsv::CommitteeVerdict& v, icsv::Trigger t) {
  return std::find(v.triggers.begin(), v.triggers.end(), t) != v.triggers.end();
}

}  // namespace

TEST_SUITE("icsv") {
  TEST_CASE("consensus properties over random committees") {
    testsupport::Gen g(1234);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto c = oracles::random_committee(g);
      double sum = 0.0;
      for (double x : c.gamma) sum += x;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      const double v = icsv::aggregate_consensus(c.gamma, c.votes);
      CHECK(v >= -1.0 - 1e-12);
      CHECK(v <= 1.0 + 1e-12);
      std::vector<int> flipped;
      for (int x : c.votes) flipped.push_back(-x);
      CHECK(icsv::aggregate_consensus(c.gamma, flipped) == doctest::Approx(-v).epsilon(1e-12));

      // Scaling every influence leaves gamma, and so the consensus, unchanged.
      std::vector<icsv::AspectCluster> a(c.gamma.size()), b(c.gamma.size());
      std::vector<double> inf, scaled;
      for (std::size_t j = 0; j < c.gamma.size(); ++j) {
        a[j].papers = {j};
        b[j].papers = {j};
        inf.push_back(c.gamma[j] * 3.0 + 0.01);
        scaled.push_back(inf.back() * 17.5);
      }
      icsv::assign_credibility(a, inf);
      icsv::assign_credibility(b, scaled);
      std::vector<double> ga, gb;
      for (std::size_t j = 0; j < a.size(); ++j) {
        ga.push_back(a[j].gamma);
        gb.push_back(b[j].gamma);
        CHECK(a[j].gamma == doctest::Approx(b[j].gamma).epsilon(1e-12));
      }
      CHECK(icsv::aggregate_consensus(ga, c.votes) == doctest::Approx(icsv::aggregate_consensus(gb, c.votes)));
    }
  }

  TEST_CASE("consensus rejects misaligned inputs") {
    CHECK_THROWS_AS(icsv::aggregate_consensus({0.5, 0.5}, {1}), ContractError);
  }

  TEST_CASE("calibration matches a brute-force oracle") {
    testsupport::Gen g(777);
    const icsv::CommitteeConfig cfg;
    for (int trial = 0; trial < 500; ++trial) {
      const auto c = oracles::random_committee(g);
      const auto o = oracles::oracle_calibrate(c);
      const auto got = icsv::decide(c.gamma, c.votes, c.stability, c.size, cfg);
      CHECK(std::fabs(got.v_final - o.v) <= 1e-9);
      CHECK(std::fabs(got.n_eff - o.n_eff) <= 1e-9);
      CHECK(std::fabs(got.entropy - o.entropy) <= 1e-9);
      CHECK(std::fabs(got.a_bar - o.a_bar) <= 1e-9);
      CHECK(std::fabs(got.conf - o.conf) <= 1e-9);
      CHECK(trigger_names(got) == o.triggers);
      CHECK(to_string(got.label) == o.label);
    }
  }

  TEST_CASE("abstention trigger boundaries") {
    icsv::CommitteeConfig cfg;
    cfg.k_min = 2;
    const std::vector<double> gamma{0.5, 0.5};  // n_eff = 2 exactly
    const std::vector<int> agree{1, 1};
    const std::vector<double> stable{1.0, 1.0};

    // Committee size against K_min.
    CHECK(has(icsv::calibrate_confidence(gamma, agree, stable, 1.0, 1, cfg), icsv::Trigger::InsufficientWitnesses));
    const auto full = icsv::calibrate_confidence(gamma, agree, stable, 1.0, 2, cfg);
    CHECK(full.triggers.empty());
    CHECK(full.label == VerdictLabel::Supported);

    // The margin band is closed at both ends.
    CHECK(has(icsv::calibrate_confidence(gamma, agree, stable, 0.3, 2, cfg), icsv::Trigger::LowMargin));
    CHECK(has(icsv::calibrate_confidence(gamma, agree, stable, -0.3, 2, cfg), icsv::Trigger::LowMargin));
    CHECK_FALSE(has(icsv::calibrate_confidence(gamma, agree, stable, 0.3 + 1e-9, 2, cfg), icsv::Trigger::LowMargin));

    // conf = |v| here; conf_min itself passes.
    const auto at_min = icsv::calibrate_confidence(gamma, agree, stable, 0.5, 2, cfg);
    CHECK(at_min.conf == 0.5);
    CHECK_FALSE(has(at_min, icsv::Trigger::LowConfidence));
    CHECK(has(icsv::calibrate_confidence(gamma, agree, stable, 0.5 - 1e-9, 2, cfg), icsv::Trigger::LowConfidence));

    // Entropy of an even two-way split is log 2 / log 3.
    const std::vector<int> split{1, -1};
    const double h = std::log(2.0) / std::log(3.0);
    cfg.h_max = h + 1e-6;
    CHECK_FALSE(has(icsv::calibrate_confidence(gamma, split, stable, 0.0, 2, cfg), icsv::Trigger::HighDisagreement));
    cfg.h_max = h - 1e-6;
    CHECK(has(icsv::calibrate_confidence(gamma, split, stable, 0.0, 2, cfg), icsv::Trigger::HighDisagreement));
  }

  TEST_CASE("triggers are reported in order") {
    const icsv::CommitteeConfig cfg;
    const auto v = icsv::calibrate_confidence({0.5, 0.5}, {1, -1}, {1.0, 1.0}, 0.0, 1, cfg);
    CHECK(trigger_names(v) ==
          std::vector<std::string>{"InsufficientWitnesses", "LowMargin", "LowConfidence", "HighDisagreement"});
    CHECK(v.label == VerdictLabel::Undecidable);
    CHECK(v.provisional == VerdictLabel::Undecidable);
  }

  TEST_CASE("relation tallies") {
    using R = icsv::Relation;
    auto t = icsv::tally_relations({R::Entails, R::Entails, R::Neutral});
    CHECK(t.label == R::Entails);
    CHECK(t.vote == 1);
    CHECK(t.stability == doctest::Approx(2.0 / 3.0));
    t = icsv::tally_relations({R::Entails, R::Contradicts, R::Neutral});
    CHECK(t.label == R::Neutral);
    CHECK(t.stability == doctest::Approx(1.0 / 3.0));
    t = icsv::tally_relations({R::Contradicts, R::Contradicts, R::Contradicts});
    CHECK(t.vote == -1);
    CHECK(t.stability == 1.0);
    CHECK_THROWS_AS(icsv::tally_relations({}), ContractError);
  }

  TEST_CASE("relation replies parse from JSON or a single bare label") {
    CHECK(icsv::parse_relation("{\"label\": \"ENTAILS\", \"justification\": \"x\"}") == icsv::Relation::Entails);
    CHECK(icsv::parse_relation("```json\n{\"label\":\"contradicts\"}\n```") == icsv::Relation::Contradicts);
    CHECK(icsv::parse_relation("NEUTRAL") == icsv::Relation::Neutral);
    CHECK_FALSE(icsv::parse_relation("ENTAILS or CONTRADICTS"));
    CHECK_FALSE(icsv::parse_relation("no idea"));
  }

  TEST_CASE("partition validation") {
    const std::vector<int> ids{1, 2, 3};
    CHECK(icsv::validate_partition(Json::parse(R"({"clusters":[{"claim_ids":[1,2]},{"claim_ids":[3]}]})"), ids).empty());
    CHECK_FALSE(icsv::validate_partition(Json::parse(R"({"clusters":[{"claim_ids":[1,2]}]})"), ids).empty());
    CHECK_FALSE(icsv::validate_partition(Json::parse(R"({"clusters":[{"claim_ids":[1,2]},{"claim_ids":[2,3]}]})"), ids)
                    .empty());
    CHECK_FALSE(icsv::validate_partition(Json::parse(R"({"clusters":[{"claim_ids":[1,2,3,4]}]})"), ids).empty());
    CHECK_FALSE(icsv::validate_partition(Json::parse(R"({"clusters":[{"claim_ids":[]},{"claim_ids":[1,2,3]}]})"), ids)
                    .empty());
    CHECK_FALSE(icsv::validate_partition(Json::parse(R"([1,2,3])"), ids).empty());
  }

  TEST_CASE("claim cleanliness") {
    CHECK(icsv::claim_is_clean("Dense retrieval improves answer accuracy."));
    CHECK_FALSE(icsv::claim_is_clean("Dense retrieval improves accuracy [3]."));
    CHECK_FALSE(icsv::claim_is_clean("Karpov et al. showed gains."));
    CHECK_FALSE(icsv::claim_is_clean("Gains were shown in 2020."));
    CHECK_FALSE(icsv::claim_is_clean("First sentence. Second sentence."));
    CHECK_FALSE(icsv::claim_is_clean("Karpov showed gains.", {"karpov"}));
    CHECK_FALSE(icsv::claim_is_clean("   "));
  }

  TEST_CASE("context windows grow to the paragraph and then its neighbors") {
    const auto doc = dpcm::parse_transcript(
        "Before paragraph.\n\nS zero here. S one here. S two here. S three here. S four here.\n\nAfter paragraph.\n",
        dpcm::StyleConfig{}, "d");
    const std::size_t cited = 3;  // "S two here."
    REQUIRE(doc.sentences.at(cited).text == "S two here.");
    CHECK(icsv::radius_cap(doc, cited) == 3);
    CHECK(icsv::context_window(doc, cited, 1) == "S one here. S two here. S three here.");
    CHECK(icsv::context_window(doc, cited, 2) == "S zero here. S one here. S two here. S three here. S four here.");
    const auto capped = icsv::context_window(doc, cited, 3);
    CHECK(capped.find("Before paragraph.") == 0);
    CHECK(capped.find("After paragraph.") != std::string::npos);
    CHECK(icsv::context_window(doc, cited, 9) == capped);
    CHECK_THROWS_AS(icsv::context_window(doc, cited, 0), ContractError);
  }

  TEST_CASE("atomic claims need two agreeing radii") {
    const auto doc = dpcm::parse_transcript("Intro sentence. Dense retrieval helps [1]. Closing sentence.\n",
                                            dpcm::StyleConfig{}, "d");
    CitationEdge edge;
    edge.occurrence_id = "d#o1";
    edge.sentence_index = 1;
    auto stable = testsupport::stub_gateway(Json{
        {"completions",
         Json::array({Json{{"tag", "icsv/paraphrase"}, {"replies", "Dense retrieval helps question answering."}}})}});
    ScopedClient c1(*stable);
    const auto claim = icsv::extract_atomic_claim(doc, edge, c1, icsv::CommitteeConfig{});
    CHECK(claim.text == "Dense retrieval helps question answering.");
    CHECK(claim.window_radius_used == 1);

    auto dirty = testsupport::stub_gateway(
        Json{{"completions", Json::array({Json{{"tag", "icsv/paraphrase"}, {"replies", "Dense retrieval helped in 2020."}}})}});
    ScopedClient c2(*dirty);
    CHECK_THROWS_AS(icsv::extract_atomic_claim(doc, edge, c2, icsv::CommitteeConfig{}), UnderspecifiedError);
  }

  TEST_CASE("ECDF, quantile, and influence") {
    CHECK(icsv::ecdf({1, 2, 3, 4}, 2) == doctest::Approx(0.5));
    CHECK(icsv::ecdf({1, 2, 3, 4}, 0) == 0.0);
    CHECK(icsv::ecdf({1, 2, 3, 4}, 9) == 1.0);
    CHECK(icsv::quantile({1, 2, 3, 4, 5}, 0.5) == doctest::Approx(3.0));
    CHECK(icsv::quantile({0, 10}, 0.25) == doctest::Approx(2.5));
    CHECK_THROWS_AS(icsv::ecdf({}, 1.0), ContractError);

    icsv::ReferenceStats stats;
    stats.add("citations", "cs.CL", 2020, {0, 10, 20, 30, 40, 50, 60, 70, 80, 90});
    stats.add("impact_factor", "cs.CL", std::nullopt, {1.0, 2.0, 3.0, 4.0});
    stats.add("repository_rate", "cs.CL", std::nullopt, {0.1, 0.2, 0.3, 0.4});
    csac::IndexRecord r;
    r.meta.year = 2020;
    r.field = "cs.CL";
    r.citation_count = 45;
    r.impact_factor = 2.0;
    const icsv::CommitteeConfig cfg;
    const auto d = icsv::influence_score(r, stats, {}, cfg);
    CHECK(d.c_norm == doctest::Approx(0.5));
    CHECK(d.v_norm == doctest::Approx(0.5));
    CHECK(d.influence == doctest::Approx(0.6 * 0.5 + 0.4 * 0.5));
    CHECK(d.venue_metric == "impact_factor");
    CHECK_FALSE(d.citation_fallback);

    r.venue_type = csac::VenueType::Preprint;
    r.repository_rate = 0.4;
    const auto p = icsv::influence_score(r, stats, {}, cfg);
    CHECK(p.v_norm == doctest::Approx(0.85));

    // No reference distribution for the year: the witness pool is used.
    r.meta.year = 1999;
    csac::IndexRecord other = r;
    other.citation_count = 5;
    const auto f = icsv::influence_score(r, stats, {r, other}, cfg);
    CHECK(f.citation_fallback);
    CHECK(f.c_norm == doctest::Approx(1.0));
  }

  TEST_CASE("credibility is uniform when every support is zero") {
    std::vector<icsv::AspectCluster> cs(4);
    for (std::size_t j = 0; j < cs.size(); ++j) cs[j].papers = {j};
    icsv::assign_credibility(cs, {0, 0, 0, 0});
    for (const auto& c : cs) CHECK(c.gamma == doctest::Approx(0.25));
  }

  TEST_CASE("committee config validation") {
    icsv::CommitteeConfig c;
    c.k_min = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.t_miscite = 0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
