#include <algorithm>
#include <random>

#include "citecheck/errors.hpp"
#include "citecheck/eval.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace citecheck;

namespace {

std::shared_ptr<Gateway> grader_gateway() {
  auto stub = std::make_shared<StubBackend>();
  stub->load_fixture_dir(testsupport::fixture("eval/stub"));
  GatewayOptions o;
  o.cache.enabled = false;
  o.max_parallel = 4;
  return std::make_shared<Gateway>(stub, o);
}

std::vector<eval::LedgerEntry> ledger(const std::vector<std::tuple<std::string, std::int64_t, VerdictLabel>>& rows) {
  std::vector<eval::LedgerEntry> out;
  for (const auto& [id, tokens, v] : rows) out.push_back({id, tokens, v});
  return out;
}

const std::string kHeader =
    "Id,Miscitation,Explanation,Correct Statement,Original Text,Miscite Type,Difficulties\n";

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("fixture benchmark scores match the oracle") {
    const auto gold = eval::load_benchmark(testsupport::fixture("eval/benchmark.csv"));
    REQUIRE(gold.size() == 50);
    const auto preds = eval::predictions_from_json(oracles::load_json(testsupport::fixture("eval/predictions.json")));
    const Json oracle = oracles::load_json(testsupport::fixture("eval/oracle.json"));
    auto gw = grader_gateway();
    ScopedClient grader(*gw);
    const auto report = eval::evaluate(gold, preds, grader, 0);
    const double expected = oracle.at("acc_pass_at_3_numerator").get<double>() / oracle.at("instances").get<double>();
    CHECK(report.acc_pass_at_3 == doctest::Approx(expected).epsilon(1e-12));
    std::vector<std::string> passing;
    for (const auto& r : report.instances)
      if (r.passed) passing.push_back(r.id);
    CHECK(passing == oracle.at("passing_instances").get<std::vector<std::string>>());
    CHECK(report.acc_surface.has_value());
    CHECK(report.acc_deep.has_value());
  }

  TEST_CASE("evaluation is order invariant") {
    const auto gold = eval::load_benchmark(testsupport::fixture("eval/benchmark.csv"));
    auto preds = eval::predictions_from_json(oracles::load_json(testsupport::fixture("eval/predictions.json")));
    auto gw = grader_gateway();
    ScopedClient a(*gw);
    const double base = eval::evaluate(gold, preds, a).acc_pass_at_3;
    std::mt19937_64 rng(3);
    std::shuffle(preds.begin(), preds.end(), rng);
    ScopedClient b(*gw);
    CHECK(eval::evaluate(gold, preds, b).acc_pass_at_3 == base);
  }

  TEST_CASE("pass@3 oracle and ragged input") {
    using G = eval::Grade;
    CHECK(eval::acc_pass_at_3({{G::Incorrect, G::Incorrect, G::Correct}, {G::Incorrect, G::Incorrect, G::Incorrect}}) ==
          doctest::Approx(0.5));
    CHECK(eval::acc_pass_at_3({{G::Correct, G::Correct, G::Correct}}) == 1.0);
    CHECK_THROWS_AS(eval::acc_pass_at_3({{G::Correct, G::Correct}}), ContractError);
    CHECK_THROWS_AS(eval::acc_pass_at_3({{G::Correct, G::Correct, G::Correct}, {G::Correct}}), ContractError);

    testsupport::Gen g(8);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::vector<G>> grades;
      int pass = 0;
      const int n = g.integer(1, 30);
      for (int i = 0; i < n; ++i) {
        std::vector<G> row;
        bool any = false;
        for (int k = 0; k < 3; ++k) {
          const bool ok = g.coin(0.3);
          any = any || ok;
          row.push_back(ok ? G::Correct : G::Incorrect);
        }
        pass += any ? 1 : 0;
        grades.push_back(row);
      }
      CHECK(eval::acc_pass_at_3(grades) == doctest::Approx(static_cast<double>(pass) / n).epsilon(1e-12));
    }
  }

  TEST_CASE("token economy") {
    using V = VerdictLabel;
    const auto full = ledger({{"a", 10000, V::Supported}, {"b", 10000, V::Miscitation}, {"c", 500, V::Supported}});
    const auto agent = ledger({{"a", 2000, V::Supported}, {"b", 2000, V::Miscitation}, {"c", 1, V::Undecidable}});
    const auto r = eval::token_economy_report(full, agent);
    CHECK(std::fabs(r.value - 0.8) <= 1e-12);
    CHECK(r.instances == 2);
    CHECK(eval::token_economy(full, full) == 0.0);
    CHECK_THROWS_AS(eval::token_economy(full, ledger({{"z", 1, V::Supported}})), UndefinedResultError);
    CHECK_THROWS_AS(eval::token_economy(ledger({{"a", 0, V::Supported}}), ledger({{"a", 5, V::Supported}})),
                    UndefinedResultError);
  }

  TEST_CASE("numeric matching and grade parsing") {
    CHECK(eval::numeric_match(100.5, 100.0));
    CHECK_FALSE(eval::numeric_match(102.0, 100.0));
    CHECK(eval::numeric_match(0.005, 0.0));
    CHECK(eval::parse_grade("CORRECT") == eval::Grade::Correct);
    CHECK(eval::parse_grade("**incorrect**.") == eval::Grade::Incorrect);
    CHECK_FALSE(eval::parse_grade("maybe"));
  }

  TEST_CASE("benchmark schema errors") {
    CHECK_THROWS_AS(eval::parse_benchmark(kHeader + "x,m,e,c,o,Scope Extrapolation Error,MEDIUM\n"), SchemaError);
    CHECK_THROWS_AS(eval::parse_benchmark(kHeader + "x,m,e,c,o,Not A Code,DEEP\n"), SchemaError);
    CHECK_THROWS_AS(eval::parse_benchmark("Id,Miscitation\nx,m\n"), SchemaError);
    const auto ok = eval::parse_benchmark(kHeader + "x,m,e,c,o,SE,surface\n");
    REQUIRE(ok.size() == 1);
    CHECK(ok[0].difficulty == eval::Difficulty::Surface);
    CHECK(ok[0].miscite_type == TaxonomyCode::ScopeExtrapolation);
  }

  TEST_CASE("evaluation rejects missing or short predictions") {
    const auto gold = eval::parse_benchmark(kHeader + "x,m,e,c,o,SE,DEEP\n");
    auto gw = grader_gateway();
    ScopedClient grader(*gw);
    eval::Prediction p;
    CHECK_THROWS_AS(eval::evaluate(gold, {{"x", {p, p}}}, grader), SchemaError);
    CHECK_THROWS_AS(eval::evaluate(gold, {{"y", {p, p, p}}}, grader), SchemaError);
  }

  TEST_CASE("subcommittee verdicts match the calibration oracle") {
    eval::PoolOptions po;
    po.sources = 6;
    const auto pool = eval::synthetic_pool(po);
    const icsv::CommitteeConfig cfg;
    testsupport::Gen g(4);
    for (const auto& s : pool) {
      const auto dom = eval::dominant_witnesses(s);
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> pick = dom;
        std::shuffle(pick.begin(), pick.end(), g.rng);
        pick.resize(static_cast<std::size_t>(g.integer(1, static_cast<int>(dom.size()))));
        // Rebuild the committee: aspects touched by the chosen witnesses,
        // support = summed influence.
        std::vector<double> support(s.aspect_votes.size(), 0.0);
        std::vector<bool> touched(s.aspect_votes.size(), false);
        for (auto w : pick)
          for (int a : s.witnesses[w].aspects) {
            support[a] += s.witnesses[w].influence;
            touched[a] = true;
          }
        oracles::Committee c;
        double total = 0.0;
        for (std::size_t a = 0; a < support.size(); ++a) total += touched[a] ? support[a] : 0.0;
        for (std::size_t a = 0; a < support.size(); ++a) {
          if (!touched[a]) continue;
          c.gamma.push_back(support[a] / total);
          c.votes.push_back(s.aspect_votes[a]);
          c.stability.push_back(s.aspect_stability[a]);
        }
        c.size = pick.size();
        const auto o = oracles::oracle_calibrate(c);
        const auto got = eval::evaluate_subcommittee(s, pick, cfg);
        CHECK(std::fabs(got.v_final - o.v) <= 1e-9);
        CHECK(std::fabs(got.conf - o.conf) <= 1e-9);
        CHECK(to_string(got.label) == o.label);
      }
    }
  }

  TEST_CASE("ablation is deterministic and shows the committee-size knee") {
    const auto pool = eval::synthetic_pool(eval::PoolOptions{});
    eval::validate_pool(pool);
    std::vector<int> sizes;
    for (int n = 1; n <= 25; ++n) sizes.push_back(n);
    const auto a = eval::committee_ablation(pool, sizes, 200, 7);
    const auto b = eval::committee_ablation(pool, sizes, 200, 7);
    CHECK(eval::ablation_csv(a) == eval::ablation_csv(b));
    for (const auto& r : a) {
      if (r.n_voter < 6) {
        CHECK(r.non_abstention_rate == 0.0);
      } else {
        CHECK(r.non_abstention_rate >= 0.9);
        REQUIRE(r.conditional_accuracy.has_value());
        CHECK(*r.conditional_accuracy >= 0.95);
      }
    }
  }

  TEST_CASE("pool JSON round-trips and undersized pools are rejected") {
    eval::PoolOptions po;
    po.sources = 2;
    const auto pool = eval::synthetic_pool(po);
    const auto back = eval::synthetic_source_from_json(eval::to_json(pool[0]));
    CHECK(eval::to_json(back) == eval::to_json(pool[0]));
    auto small = pool;
    small[0].witnesses.resize(3);
    CHECK_THROWS_AS(eval::validate_pool(small), SchemaError);
  }
}
