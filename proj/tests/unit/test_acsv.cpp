#include <algorithm>
#include <cmath>
#include <numeric>

#include "citecheck/acsv.hpp"
#include "citecheck/dpcm.hpp"
#include "citecheck/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace citecheck;

namespace {

double brute_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na == 0.0 || nb == 0.0) ? 0.0 : dot / std::sqrt(na * nb);
}

ParsedDocument doc_from(const std::string& md) { return dpcm::parse_transcript(md, dpcm::StyleConfig{}, "d"); }

struct Fixture {
  ParsedDocument citing = doc_from(
      "# Intro\n\nEarlier work studied retrieval. Dense retrieval improves answer accuracy. Later work extended it.\n");
  CitationEdge edge;
  Fixture() {
    edge.occurrence_id = "d#o1";
    edge.sentence_index = 1;
    edge.target_keys = {"ref1"};
  }
};

}  // namespace

TEST_SUITE("acsv") {
  TEST_CASE("retrieval matches a brute-force cosine ranking") {
    testsupport::Gen g(99);
    auto gw = testsupport::stub_gateway();
    ScopedClient client(*gw);
    for (int trial = 0; trial < 100; ++trial) {
      std::string md;
      const int m = g.integer(1, 25);
      for (int p = 0; p < m; ++p) {
        if (p) md += "\n\n";
        const int s = g.integer(1, 4);
        for (int k = 0; k < s; ++k) md += (k ? " " : "") + g.sentence();
      }
      const auto doc = doc_from(md);
      const std::string query = g.sentence();
      acsv::FunnelConfig cfg;
      cfg.top_k = g.integer(1, 12);
      const auto got = acsv::retrieve_candidates(query, doc, client, cfg);

      const auto paras = acsv::paragraphs_of(doc);
      const auto q = StubBackend::hash_embedding(query);
      std::vector<std::pair<double, std::size_t>> oracle;
      for (std::size_t i = 0; i < paras.size(); ++i)
        oracle.emplace_back(brute_cosine(q, StubBackend::hash_embedding(paras[i].text())), i);
      std::stable_sort(oracle.begin(), oracle.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      const std::size_t expect = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), paras.size());
      REQUIRE(got.size() == expect);
      for (std::size_t i = 0; i < expect; ++i) {
        CHECK(got[i].paragraph.id == paras[oracle[i].second].id);
        CHECK(got[i].score == doctest::Approx(oracle[i].first).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("retrieval rejects a document without paragraphs") {
    auto gw = testsupport::stub_gateway();
    ScopedClient client(*gw);
    CHECK_THROWS_AS(acsv::retrieve_candidates("q", doc_from("# Only a heading\n"), client, acsv::FunnelConfig{}),
                    ContractError);
  }

  TEST_CASE("window counts") {
    for (std::size_t n = 1; n <= 12; ++n) {
      for (std::size_t w = 1; w <= 5; ++w) {
        const auto s = acsv::window_starts(n, w);
        CHECK(s.size() == std::max<std::size_t>(1, n >= w ? n - w + 1 : 1));
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == i);
      }
    }
  }

  TEST_CASE("rerank keeps focus_n paragraphs and slices windows") {
    auto gw = testsupport::stub_gateway();
    ScopedClient client(*gw);
    const auto doc = doc_from("A one. A two. A three. A four.\n\nB one.\n\nC one. C two.\n\nD one.\n");
    acsv::FunnelConfig cfg;
    const auto cands = acsv::retrieve_candidates("A one.", doc, client, cfg);
    const auto windows = acsv::rerank_and_window("A one.", cands, client, cfg);
    std::vector<std::size_t> paras;
    std::size_t total = 0;
    for (const auto& w : windows) {
      if (std::find(paras.begin(), paras.end(), w.paragraph) == paras.end()) paras.push_back(w.paragraph);
      CHECK(w.sentence_count <= 3);
    }
    CHECK(paras.size() == 3);
    for (const auto& c : cands) {
      if (std::find(paras.begin(), paras.end(), c.paragraph.id) != paras.end())
        total += acsv::window_starts(c.paragraph.sentences.size(), 3).size();
    }
    CHECK(windows.size() == total);
  }

  TEST_CASE("confident entailment exits early with no generation") {
    Fixture f;
    auto gw = testsupport::stub_gateway();
    ScopedClient client(*gw);
    const auto cited = doc_from("Dense retrieval improves answer accuracy entail:0.97 on every benchmark.\n\nOther text.\n");
    const auto r = acsv::verify_accessible(f.edge, "ref1", cited, f.citing, client, acsv::FunnelConfig{});
    CHECK(r.verdict.label == VerdictLabel::Supported);
    CHECK(r.verdict.confidence == doctest::Approx(0.97));
    CHECK(client.generation_calls() == 0);
    CHECK(client.usage_report("acsv/lrm").total() == 0);
    CHECK(r.trace.at("phase_reached") == "NliEarlyExit");
  }

  TEST_CASE("confident contradiction exits early as a miscitation") {
    Fixture f;
    auto gw = testsupport::stub_gateway();
    ScopedClient client(*gw);
    const auto cited = doc_from("Dense retrieval hurts accuracy contradict:0.95 in all settings.\n");
    const auto r = acsv::verify_accessible(f.edge, "ref1", cited, f.citing, client, acsv::FunnelConfig{});
    CHECK(r.verdict.label == VerdictLabel::Miscitation);
    CHECK(client.generation_samples() == 0);
  }

  TEST_CASE("ambiguous evidence goes through expansion and exactly sc_samples LRM samples") {
    Fixture f;
    auto gw = testsupport::stub_gateway(Json{
        {"completions", Json::array({Json{{"tag", "acsv/lrm"},
                                          {"replies", Json::array({"Verdict: Supported", "Verdict: Supported",
                                                                   "Verdict: Miscitation", "Supported", "garbage"})}}})}});
    ScopedClient client(*gw);
    const auto cited = doc_from("Unrelated zoology facts about penguins. They swim. They dive.\n\nMore penguins.\n");
    acsv::FunnelConfig cfg;
    const auto r = acsv::verify_accessible(f.edge, "ref1", cited, f.citing, client, cfg);
    CHECK(client.generation_calls() == 1);
    CHECK(client.generation_samples() == cfg.sc_samples);
    CHECK(r.trace.at("expanded") == true);
    CHECK(r.trace.at("phase_reached") == "LrmAdjudicated");
    CHECK(r.verdict.label == VerdictLabel::Supported);
    CHECK(r.verdict.confidence == doctest::Approx(0.6));
  }

  TEST_CASE("expanded hypothesis joins neighbors") {
    CHECK(acsv::expand_hypothesis("A.", "B.", "C.") == "A. B. C.");
    CHECK(acsv::expand_hypothesis("", "B.", " C. ") == "B. C.");
  }

  TEST_CASE("LRM verdict parsing takes the last label line") {
    CHECK(acsv::parse_lrm_verdict("Reasoning...\nVerdict: Miscitation") == VerdictLabel::Miscitation);
    CHECK(acsv::parse_lrm_verdict("verdict: supported\nFinal verdict: **Undecidable**") == VerdictLabel::Undecidable);
    CHECK(acsv::parse_lrm_verdict("Supported") == VerdictLabel::Supported);
    CHECK_FALSE(acsv::parse_lrm_verdict("The claim is probably supported by the text."));
  }

  TEST_CASE("vote tallies") {
    using V = std::optional<VerdictLabel>;
    const V S = VerdictLabel::Supported, M = VerdictLabel::Miscitation, U = VerdictLabel::Undecidable, X;
    auto a = acsv::tally_votes({S, S, S, M, U}, 0.6);
    CHECK(a.label == VerdictLabel::Supported);
    CHECK(a.confidence == doctest::Approx(0.6));
    a = acsv::tally_votes({S, S, M, M, U}, 0.6);
    CHECK(a.label == VerdictLabel::Undecidable);
    a = acsv::tally_votes({M, M, X, X, S}, 0.6);
    CHECK(a.label == VerdictLabel::Undecidable);  // M and U tie at 2
    CHECK(a.votes.unparseable == 2);
    a = acsv::tally_votes({X, X, X}, 0.6);
    CHECK(a.label == VerdictLabel::Undecidable);
    CHECK(a.confidence == 0.0);
    a = acsv::tally_votes({S, S, S, M, U, X, M}, 0.6);  // 3/7 below safety
    CHECK(a.label == VerdictLabel::Undecidable);
    CHECK(a.below_safety);
  }

  TEST_CASE("funnel config validation") {
    acsv::FunnelConfig c;
    c.top_k = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.tau_high = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    const auto round = acsv::funnel_config_from_json(acsv::to_json(acsv::FunnelConfig{}));
    CHECK(round.top_k == 10);
    CHECK(round.sc_samples == 5);
  }
}
