#include <set>

#include "citecheck/pipeline.hpp"
#include "corpus.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace citecheck;

TEST_SUITE("pipeline") {
  TEST_CASE("corpus verdicts match the expected labels") {
    const auto out = testsupport::scratch("pipeline_expected");
    const auto r = corpus::run(corpus::run_config(out.string()));
    CHECK_FALSE(r.failures);
    const auto check = corpus::check_expected(r.reports);
    CHECK(check.expected == 9);
    CHECK(check.matched == check.expected);
    for (const auto& m : check.mismatches) MESSAGE(m);
  }

  TEST_CASE("two runs write byte-identical outputs") {
    const auto a = testsupport::scratch("pipeline_run_a");
    const auto b = testsupport::scratch("pipeline_run_b");
    corpus::run(corpus::run_config(a.string()));
    corpus::run(corpus::run_config(b.string()));
    const auto sa = corpus::snapshot(a);
    const auto sb = corpus::snapshot(b);
    CHECK(sa.size() > 3);
    CHECK(sa == sb);
  }

  TEST_CASE("summary counts equal the bundle verdicts") {
    const auto out = testsupport::scratch("pipeline_summary");
    corpus::run(corpus::run_config(out.string()));
    std::map<std::string, int> verdicts, routes;
    int bundles = 0;
    for (const auto& e : std::filesystem::recursive_directory_iterator(out / "bundles")) {
      if (!e.is_regular_file()) continue;
      const Json j = oracles::load_json(e.path());
      ++bundles;
      ++verdicts[j.at("verdict").get<std::string>()];
      ++routes[j.at("route").get<std::string>()];
    }
    const Json summary = oracles::load_json(out / "summary.json");
    CHECK(summary.at("citations").get<int>() == bundles);
    for (const auto& [k, v] : summary.at("verdicts").items()) CHECK(v.get<int>() == verdicts[k]);
    for (const auto& [k, v] : summary.at("routes").items()) CHECK(v.get<int>() == routes[k]);
    CHECK(std::filesystem::exists(out / "summary.md"));
  }

  TEST_CASE("a warm cache serves every deterministic call") {
    const auto cache = testsupport::scratch("pipeline_cache");
    auto make = [&](const std::string& out) {
      auto cfg = corpus::run_config(out);
      cfg.config["cache"] = Json{{"enabled", true}};
      cfg.cache_dir = cache.string();
      return cfg;
    };
    const auto cold = corpus::run(make(testsupport::scratch("pipeline_cold").string()));
    const auto warm = corpus::run(make(testsupport::scratch("pipeline_warm").string()));
    const std::set<std::string> sampled{"acsv/lrm", "taxonomy"};
    std::size_t cold_deterministic = 0;
    for (const auto& row : cold.gateway->ledger()) cold_deterministic += sampled.count(row.call_tag) ? 0 : 1;
    CHECK(cold_deterministic > 0);
    for (const auto& row : warm.gateway->ledger()) CHECK_MESSAGE(sampled.count(row.call_tag) == 1, row.call_tag);
    CHECK(warm.gateway->backend_calls() < cold.gateway->backend_calls());
    CHECK(corpus::check_expected(warm.reports).mismatches.empty());
  }

  TEST_CASE("route forcing") {
    auto cfg = corpus::run_config(testsupport::scratch("pipeline_forced_icsv").string());
    cfg.inputs = {testsupport::fixture("corpus/papers/p1.md")};
    cfg.route = pipeline::RouteMode::Inaccessible;
    auto r = corpus::run(cfg);
    for (const auto& res : r.reports.at(0).results) {
      if (res.verdict.route != Route::Ghost) CHECK(res.verdict.route == Route::Inaccessible);
    }

    cfg = corpus::run_config(testsupport::scratch("pipeline_forced_acsv").string());
    cfg.inputs = {testsupport::fixture("corpus/papers/p2.md")};
    cfg.route = pipeline::RouteMode::Accessible;
    r = corpus::run(cfg);
    CHECK(r.failures);
    for (const auto& res : r.reports.at(0).results) CHECK(res.error.has_value());
  }

  TEST_CASE("route mode parsing and bundle names") {
    CHECK(pipeline::parse_route_mode("auto") == pipeline::RouteMode::Auto);
    CHECK(pipeline::parse_route_mode("Inaccessible") == pipeline::RouteMode::Inaccessible);
    CHECK_FALSE(pipeline::parse_route_mode("sideways"));
    VerificationResult v;
    v.occurrence_id = "p1#o3";
    v.target_key = "ref 3";
    const auto name = pipeline::bundle_file_name(7, v);
    CHECK(name.rfind("0007_", 0) == 0);
    CHECK(name.find('#') == std::string::npos);
    CHECK(name.find(' ') == std::string::npos);
  }

  TEST_CASE("bad config values raise ConfigError") {
    pipeline::RunConfig cfg;
    cfg.config = Json{{"backend", "missing"}};
    CHECK_THROWS_AS(pipeline::make_services(cfg), ConfigError);
  }
}
