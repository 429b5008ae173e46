// One PASS/FAIL line per acceptance criterion. Tolerances and runtime limits
// are pinned here; the process exits nonzero when any line fails.

#include <algorithm>
#include <chrono>
#include <map>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "citecheck/acsv.hpp"
#include "citecheck/dpcm.hpp"
#include "citecheck/eval.hpp"
#include "citecheck/icsv.hpp"
#include "citecheck/taxonomy.hpp"
#include "corpus.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace citecheck;

namespace {

constexpr double kSumTol = 1e-9;
constexpr double kCalibTol = 1e-9;
constexpr double kEconomyTol = 1e-12;
constexpr double kConsensusSeconds = 5.0;
constexpr double kCalibrationSeconds = 5.0;
constexpr double kKneeSeconds = 60.0;
constexpr double kKneeLowMax = 0.2;        // non-abstention at n_voter <= 2
constexpr double kKneeHighMin = 0.9;       // non-abstention at n_voter >= 6
constexpr double kKneeAccuracyMin = 0.95;  // conditional accuracy at n_voter >= 6

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x) {
  std::ostringstream o;
  o.precision(6);
  o << x;
  return o.str();
}

Outcome consensus_math() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  testsupport::Gen g(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = oracles::random_committee(g);
    std::vector<icsv::AspectCluster> clusters(c.gamma.size()), rescaled(c.gamma.size());
    std::vector<double> influence, scaled;
    for (std::size_t j = 0; j < c.gamma.size(); ++j) {
      clusters[j].papers = {j};
      rescaled[j].papers = {j};
      influence.push_back(c.gamma[j]);
      scaled.push_back(c.gamma[j] * 4.0);  // a power of two keeps the ratios exact
    }
    icsv::assign_credibility(clusters, influence);
    icsv::assign_credibility(rescaled, scaled);
    std::vector<double> gamma, gamma_scaled;
    double sum = 0.0;
    for (std::size_t j = 0; j < clusters.size(); ++j) {
      gamma.push_back(clusters[j].gamma);
      gamma_scaled.push_back(rescaled[j].gamma);
      sum += clusters[j].gamma;
    }
    o.require(std::fabs(sum - 1.0) <= kSumTol, "sum of gamma off by " + fmt(sum - 1.0));
    const double v = icsv::aggregate_consensus(gamma, c.votes);
    o.require(v >= -1.0 && v <= 1.0, "v_final outside [-1,1]: " + fmt(v));
    std::vector<int> flipped;
    for (int x : c.votes) flipped.push_back(-x);
    o.require(icsv::aggregate_consensus(gamma, flipped) == -v, "sign flip is not exact");
    const icsv::CommitteeConfig cfg;
    const auto a = icsv::decide(gamma, c.votes, c.stability, c.size, cfg);
    const auto b = icsv::decide(gamma_scaled, c.votes, c.stability, c.size, cfg);
    o.require(a.label == b.label && a.v_final == b.v_final && a.conf == b.conf && a.triggers == b.triggers,
              "support rescaling changed a verdict");
  }
  const double s = seconds_since(t0);
  o.require(s < kConsensusSeconds, "runtime " + fmt(s) + " s");
  if (o.pass) o.detail = "1000 committees in " + fmt(s) + " s";
  return o;
}

Outcome calibration_equivalence() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  testsupport::Gen g(555);
  const icsv::CommitteeConfig cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = oracles::random_committee(g);
    const auto want = oracles::oracle_calibrate(c);
    const auto got = icsv::decide(c.gamma, c.votes, c.stability, c.size, cfg);
    for (double d : {got.v_final - want.v, got.n_eff - want.n_eff, got.entropy - want.entropy,
                     got.a_bar - want.a_bar, got.conf - want.conf})
      worst = std::max(worst, std::fabs(d));
    std::vector<std::string> names;
    for (auto t : got.triggers) names.push_back(icsv::to_string(t));
    o.require(names == want.triggers, "trigger list differs");
    o.require(to_string(got.label) == want.label, "label differs");
  }
  o.require(worst <= kCalibTol, "max deviation " + fmt(worst));
  const double s = seconds_since(t0);
  o.require(s < kCalibrationSeconds, "runtime " + fmt(s) + " s");
  if (o.pass) o.detail = "500 cases, max deviation " + fmt(worst) + ", " + fmt(s) + " s";
  return o;
}

bool fires(const icsv::CommitteeVerdict& v, icsv::Trigger t) {
  return std::find(v.triggers.begin(), v.triggers.end(), t) != v.triggers.end();
}

double two_way_entropy(double a) { return -(a * std::log(a + 1e-12) + (1 - a) * std::log(1 - a + 1e-12)) / std::log(3.0); }

Outcome abstention_exactness() {
  Outcome o;
  const icsv::CommitteeConfig cfg;  // K_min 6, margin 0.3, conf_min 0.5, H_max 0.6
  // Eight equal clusters: n_eff = 8 and sum gamma * a = 1 exactly, so conf = |v|.
  const std::vector<double> g8(8, 0.125);
  const std::vector<int> agree(8, 1);
  const std::vector<double> stable(8, 1.0);
  int passed = 0;
  auto pair = [&](const std::string& name, bool inside, bool outside) {
    o.require(inside, name + ": just-inside case did not fire");
    o.require(!outside, name + ": just-outside case fired");
    passed += (inside ? 1 : 0) + (!outside ? 1 : 0);
  };
  pair("committee size", fires(icsv::calibrate_confidence(g8, agree, stable, 1.0, 5, cfg), icsv::Trigger::InsufficientWitnesses),
       fires(icsv::calibrate_confidence(g8, agree, stable, 1.0, 6, cfg), icsv::Trigger::InsufficientWitnesses));
  pair("margin", fires(icsv::calibrate_confidence(g8, agree, stable, 0.3, 8, cfg), icsv::Trigger::LowMargin),
       fires(icsv::calibrate_confidence(g8, agree, stable, 0.3 + 1e-9, 8, cfg), icsv::Trigger::LowMargin));
  pair("confidence",
       fires(icsv::calibrate_confidence(g8, agree, stable, 0.5 - 1e-9, 8, cfg), icsv::Trigger::LowConfidence),
       fires(icsv::calibrate_confidence(g8, agree, stable, 0.5, 8, cfg), icsv::Trigger::LowConfidence));
  // Two-way split whose entropy straddles H_max.
  double lo = 0.5, hi = 1.0 - 1e-9;  // entropy falls from log2/log3 towards 0
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (two_way_entropy(mid) > cfg.h_max ? lo : hi) = mid;
  }
  const double a_in = lo - 1e-6, a_out = hi + 1e-6;
  const std::vector<int> split{1, -1};
  const std::vector<double> st2{1.0, 1.0};
  pair("entropy",
       fires(icsv::calibrate_confidence({a_in, 1 - a_in}, split, st2, a_in - (1 - a_in), 8, cfg),
             icsv::Trigger::HighDisagreement),
       fires(icsv::calibrate_confidence({a_out, 1 - a_out}, split, st2, a_out - (1 - a_out), 8, cfg),
             icsv::Trigger::HighDisagreement));
  if (o.pass) o.detail = std::to_string(passed) + "/8 boundary cases";
  return o;
}

Outcome early_exit_economy() {
  Outcome o;
  const auto citing = dpcm::parse_transcript(
      "# Intro\n\nEarlier work studied retrieval. Dense retrieval improves answer accuracy. Later work extended it.\n",
      dpcm::StyleConfig{}, "citing");
  CitationEdge edge;
  edge.occurrence_id = "citing#o1";
  edge.sentence_index = 1;
  const acsv::FunnelConfig cfg;

  auto gw1 = testsupport::stub_gateway();
  ScopedClient c1(*gw1);
  const auto planted = dpcm::parse_transcript(
      "Dense retrieval improves answer accuracy entail:0.97 across benchmarks.\n\nUnrelated paragraph.\n",
      dpcm::StyleConfig{}, "cited");
  const auto r1 = acsv::verify_accessible(edge, "ref1", planted, citing, c1, cfg);
  std::int64_t gen_tokens = 0;
  for (const auto& row : gw1->ledger())
    if (row.kind == CallKind::Generation) gen_tokens += row.input_tokens + row.output_tokens;
  o.require(r1.verdict.label == VerdictLabel::Supported, "planted entailment not Supported");
  o.require(gen_tokens == 0, "generation tokens on early exit: " + std::to_string(gen_tokens));

  auto gw2 = testsupport::stub_gateway(
      Json{{"completions", Json::array({Json{{"tag", "acsv/lrm"}, {"replies", "Verdict: Supported"}}})}});
  ScopedClient c2(*gw2);
  const auto ambiguous = dpcm::parse_transcript(
      "Penguins live in cold places. They swim. They dive deep.\n\nMore about penguins.\n", dpcm::StyleConfig{},
      "cited");
  acsv::verify_accessible(edge, "ref1", ambiguous, citing, c2, cfg);
  std::int64_t samples = 0;
  for (const auto& row : gw2->ledger())
    if (row.kind == CallKind::Generation) ++samples;  // one ledger row per generated sample
  o.require(samples == cfg.sc_samples, "ambiguous case generated " + std::to_string(samples) + " samples");
  o.require(c2.generation_samples() == cfg.sc_samples, "scoped ledger disagrees");
  if (o.pass) o.detail = "0 generation tokens on early exit; " + std::to_string(samples) + " samples when ambiguous";
  return o;
}

Outcome funnel_oracle() {
  Outcome o;
  testsupport::Gen g(4242);
  auto gw = testsupport::stub_gateway();
  ScopedClient client(*gw);
  const acsv::FunnelConfig cfg;
  std::size_t windows_checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::string md;
    const int m = g.integer(1, 30);
    for (int p = 0; p < m; ++p) {
      if (p) md += "\n\n";
      const int s = g.integer(1, 6);
      for (int k = 0; k < s; ++k) md += (k ? " " : "") + g.sentence();
    }
    const auto doc = dpcm::parse_transcript(md, dpcm::StyleConfig{}, "r");
    const std::string query = g.sentence();
    const auto got = acsv::retrieve_candidates(query, doc, client, cfg);
    const auto paras = acsv::paragraphs_of(doc);
    const auto q = StubBackend::hash_embedding(query);
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < paras.size(); ++i) {
      const auto v = StubBackend::hash_embedding(paras[i].text());
      double dot = 0, nq = 0, nv = 0;
      for (std::size_t d = 0; d < v.size(); ++d) {
        dot += q[d] * v[d];
        nq += q[d] * q[d];
        nv += v[d] * v[d];
      }
      oracle.emplace_back((nq == 0 || nv == 0) ? 0.0 : dot / std::sqrt(nq * nv), i);
    }
    std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), paras.size());
    o.require(got.size() == k, "retrieved " + std::to_string(got.size()) + " of " + std::to_string(k));
    for (std::size_t i = 0; i < std::min(k, got.size()); ++i)
      o.require(got[i].paragraph.id == paras[oracle[i].second].id, "ranking differs at doc " + std::to_string(trial));

    const auto windows = acsv::rerank_and_window(query, got, client, cfg);
    std::map<std::size_t, std::size_t> per_paragraph;
    for (const auto& w : windows) ++per_paragraph[w.paragraph];
    for (const auto& [pid, count] : per_paragraph) {
      std::size_t len = 0;
      for (const auto& p : paras)
        if (p.id == pid) len = p.sentences.size();
      const std::size_t want = len > 3 ? len - 3 + 1 : 1;
      o.require(count == want, "window count " + std::to_string(count) + " != " + std::to_string(want));
      ++windows_checked;
    }
  }
  if (o.pass) o.detail = "100 documents, " + std::to_string(windows_checked) + " focus paragraphs";
  return o;
}

Outcome parsing_corpus() {
  Outcome o;
  const auto score = oracles::score_parsing_corpus();
  o.require(score.documents == 20, "corpus has " + std::to_string(score.documents) + " documents");
  o.require(score.true_positive == score.predicted && score.true_positive == score.gold,
            "P=" + fmt(score.precision()) + " R=" + fmt(score.recall()));
  o.require(dpcm::expand_numeric("3\xE2\x80\x93" "5") == std::vector<int>{3, 4, 5}, "[3-5] expansion");
  const auto merges = oracles::score_merge_corpus();
  o.require(merges.cases > 0 && merges.exact == merges.cases,
            std::to_string(merges.exact) + "/" + std::to_string(merges.cases) + " merges byte-exact");
  if (o.pass)
    o.detail = "P=R=1 over " + std::to_string(score.gold) + " edge facts; " + std::to_string(merges.exact) +
               " merges byte-exact";
  return o;
}

Outcome extraction_verifier() {
  Outcome o;
  const auto s = oracles::score_verifier_corpus();
  o.require(s.planted == 3 && s.found == s.planted, std::to_string(s.found) + "/" + std::to_string(s.planted) + " planted");
  o.require(s.spurious == 0, std::to_string(s.spurious) + " spurious anomalies");
  const auto parse = oracles::score_parsing_corpus();
  o.require(parse.anomalies == 0, std::to_string(parse.anomalies) + " anomalies on the clean corpus");
  if (o.pass) o.detail = "3/3 planted with exact spans; 0 on " + std::to_string(parse.documents) + " clean documents";
  return o;
}

Outcome reliability_knee() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  eval::PoolOptions po;
  po.sources = 30;
  const auto pool = eval::synthetic_pool(po);
  std::vector<int> sizes;
  for (int n = 1; n <= 25; ++n) sizes.push_back(n);
  const auto rows = eval::committee_ablation(pool, sizes, 200, 7);
  double low_max = 0.0, high_min = 1.0, acc_min = 1.0;
  for (const auto& r : rows) {
    if (r.n_voter <= 2) low_max = std::max(low_max, r.non_abstention_rate);
    if (r.n_voter >= 6) {
      high_min = std::min(high_min, r.non_abstention_rate);
      acc_min = std::min(acc_min, r.conditional_accuracy.value_or(0.0));
    }
  }
  o.require(low_max <= kKneeLowMax, "non-abstention at n<=2 is " + fmt(low_max));
  o.require(high_min >= kKneeHighMin, "non-abstention at n>=6 is " + fmt(high_min));
  o.require(acc_min >= kKneeAccuracyMin, "conditional accuracy at n>=6 is " + fmt(acc_min));
  const double s = seconds_since(t0);
  o.require(s < kKneeSeconds, "runtime " + fmt(s) + " s");
  if (o.pass)
    o.detail = "n<=2 max " + fmt(low_max) + ", n>=6 min " + fmt(high_min) + ", accuracy min " + fmt(acc_min) + ", " +
               fmt(s) + " s";
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  const auto gold = eval::load_benchmark(testsupport::fixture("eval/benchmark.csv"));
  const auto preds = eval::predictions_from_json(oracles::load_json(testsupport::fixture("eval/predictions.json")));
  const Json oracle = oracles::load_json(testsupport::fixture("eval/oracle.json"));
  auto stub = std::make_shared<StubBackend>();
  stub->load_fixture_dir(testsupport::fixture("eval/stub"));
  GatewayOptions go;
  go.cache.enabled = false;
  Gateway gw(stub, go);
  ScopedClient grader(gw);
  const auto report = eval::evaluate(gold, preds, grader, 0);
  const double want = oracle.at("acc_pass_at_3_numerator").get<double>() / oracle.at("instances").get<double>();
  o.require(gold.size() == 50, "benchmark has " + std::to_string(gold.size()) + " instances");
  o.require(report.acc_pass_at_3 == want, "acc_pass_at_3 " + fmt(report.acc_pass_at_3) + " != " + fmt(want));

  using V = VerdictLabel;
  const std::vector<eval::LedgerEntry> full = {{"a", 9000, V::Supported}, {"b", 11000, V::Miscitation},
                                               {"c", 7000, V::Undecidable}, {"d", 3000, V::Supported}};
  const std::vector<eval::LedgerEntry> agent = {{"a", 1500, V::Supported}, {"b", 2500, V::Miscitation},
                                                {"c", 10, V::Supported}, {"d", 2000, V::Undecidable}};
  // Joint non-abstaining instances are a and b: 1 - 2000 / 10000.
  const double econ = eval::token_economy(full, agent);
  o.require(std::fabs(econ - 0.8) <= kEconomyTol, "token economy " + fmt(econ));
  o.require(eval::token_economy(full, full) == 0.0, "TokenEcon(L,L) != 0");
  if (o.pass) o.detail = "acc_pass_at_3 " + fmt(report.acc_pass_at_3) + " exact; economy 0.8 within 1e-12";
  return o;
}

Outcome end_to_end_determinism() {
  Outcome o;
  const auto a = testsupport::scratch("acceptance_e2e_a");
  const auto b = testsupport::scratch("acceptance_e2e_b");
  const auto ra = corpus::run(corpus::run_config(a.string()));
  corpus::run(corpus::run_config(b.string()));
  const auto sa = corpus::snapshot(a);
  const auto sb = corpus::snapshot(b);
  std::size_t bundles = 0;
  for (const auto& [k, v] : sa) bundles += k.rfind("bundles/", 0) == 0 ? 1 : 0;
  o.require(sa.count("summary.json") == 1, "summary.json missing");
  o.require(bundles > 0, "no audit bundles written");
  o.require(sa == sb, "outputs differ between runs");
  o.require(!ra.failures, "corpus run reported failures");
  if (o.pass) o.detail = std::to_string(bundles) + " bundles and summary byte-identical";
  return o;
}

Outcome taxonomy_precedence() {
  Outcome o;
  auto gw = testsupport::stub_gateway();
  ScopedClient client(*gw);
  const auto ghost = taxonomy::assign_error_code(EvidenceBundle{}, csac::AccessibilityVerdict{}, client);
  o.require(ghost.code == TaxonomyCode::AttributionTraceability, "ghost not AT");
  csac::AccessibilityVerdict retracted;
  retracted.status = csac::AccessStatus::Accessible;
  csac::IndexRecord rec;
  rec.meta.retracted = true;
  retracted.record = rec;
  const auto cv = taxonomy::assign_error_code(EvidenceBundle{}, retracted, client);
  o.require(cv.code == TaxonomyCode::CitationValidity, "retraction not CV");
  o.require(gw->ledger().empty() && client.usage_report().total() == 0, "classifier tokens were spent");

  auto tie_gw = testsupport::stub_gateway(Json{
      {"completions", Json::array({Json{{"tag", "taxonomy"},
                                        {"replies", Json::array({"Code: EC", "Code: SE", "Code: EC", "Code: SE",
                                                                 "Code: CM", "Code: CM"})}}})}});
  ScopedClient tie_client(*tie_gw);
  taxonomy::LabelerConfig lc;
  lc.samples = 6;
  csac::AccessibilityVerdict plain;
  plain.status = csac::AccessStatus::Accessible;
  const auto tie = taxonomy::assign_error_code(EvidenceBundle{}, plain, tie_client, lc);
  o.require(tie.code == TaxonomyCode::ContentMisrepresentation, "three-way tie resolved to " + to_string(tie.code));
  if (o.pass) o.detail = "AT and CV with 0 tokens; CM/SE/EC tie resolved to CM";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"consensus-math", consensus_math},
      {"calibration-equivalence", calibration_equivalence},
      {"abstention-exactness", abstention_exactness},
      {"early-exit-economy", early_exit_economy},
      {"funnel-oracle", funnel_oracle},
      {"parsing-corpus", parsing_corpus},
      {"extraction-verifier", extraction_verifier},
      {"reliability-knee", reliability_knee},
      {"metric-oracles", metric_oracles},
      {"end-to-end-determinism", end_to_end_determinism},
      {"taxonomy-precedence", taxonomy_precedence},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    failed += r.pass ? 0 : 1;
    std::cout << (r.pass ? "PASS " : "FAIL ") << name << " : " << r.detail << "\n";
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
