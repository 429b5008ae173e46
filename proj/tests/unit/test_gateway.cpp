#include <atomic>
#include <thread>

#include "citecheck/concurrency.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/gateway.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace citecheck;

namespace {

Json echo_rules() {
  return Json{{"completions", Json::array({Json{{"tag", "pick"}, {"replies", Json::array({"r0", "r1", "r2"})}},
                                           Json{{"tag", "*"}, {"replies", "default"}}})}};
}

CompletionRequest request(const std::string& tag, DecodingConfig d) {
  CompletionRequest r;
  r.user_text = "hello world";
  r.call_tag = tag;
  r.decoding = d;
  return r;
}

}  // namespace

TEST_SUITE("gateway") {
  TEST_CASE("stub reply selection follows seed and sample index") {
    auto gw = testsupport::stub_gateway(echo_rules());
    const auto sc = gw->complete(request("pick", DecodingConfig::self_consistency(4, 0.7, 1)));
    REQUIRE(sc.size() == 4);
    CHECK(sc[0].text == "r1");
    CHECK(sc[1].text == "r2");
    CHECK(sc[2].text == "r0");
    CHECK(sc[3].text == "r1");
    const auto det = gw->complete(request("pick", DecodingConfig::deterministic(2)));
    CHECK(det.at(0).text == "r2");
    CHECK(gw->complete(request("other", DecodingConfig::deterministic())).at(0).text == "default");
  }

  TEST_CASE("deterministic requests are cached, sampled ones are not") {
    auto stub = std::make_shared<StubBackend>();
    stub->add_fixtures(echo_rules());
    GatewayOptions o;
    Gateway gw(stub, o);
    gw.complete(request("pick", DecodingConfig::deterministic()));
    gw.complete(request("pick", DecodingConfig::deterministic()));
    CHECK(gw.backend_calls() == 1);
    gw.complete(request("pick", DecodingConfig::self_consistency(2, 0.7, 0)));
    gw.complete(request("pick", DecodingConfig::self_consistency(2, 0.7, 0)));
    CHECK(gw.backend_calls() == 3);
    // A different seed is a different request.
    gw.complete(request("pick", DecodingConfig::deterministic(5)));
    CHECK(gw.backend_calls() == 4);
  }

  TEST_CASE("tag overrides switch caching per tag") {
    auto stub = std::make_shared<StubBackend>();
    stub->add_fixtures(echo_rules());
    GatewayOptions o;
    o.cache.tag_overrides = {{"pick", false}};
    Gateway gw(stub, o);
    gw.complete(request("pick", DecodingConfig::deterministic()));
    gw.complete(request("pick", DecodingConfig::deterministic()));
    CHECK(gw.backend_calls() == 2);
  }

  TEST_CASE("disk cache survives a new gateway") {
    const auto dir = testsupport::scratch("gateway_cache");
    auto make = [&] {
      auto stub = std::make_shared<StubBackend>();
      stub->add_fixtures(echo_rules());
      GatewayOptions o;
      o.cache.dir = dir.string();
      return std::make_shared<Gateway>(stub, o);
    };
    auto first = make();
    first->complete(request("pick", DecodingConfig::deterministic()));
    first->embed({"a", "b"}, "emb");
    CHECK(first->backend_calls() == 2);
    auto second = make();
    const auto c = second->complete(request("pick", DecodingConfig::deterministic()));
    second->embed({"a", "b"}, "emb");
    CHECK(c.at(0).text == "r0");
    CHECK(second->backend_calls() == 0);
  }

  TEST_CASE("transport failures are retried") {
    auto stub = std::make_shared<StubBackend>();
    stub->add_fixtures(echo_rules());
    GatewayOptions o;
    o.cache.enabled = false;
    o.backoff = std::chrono::milliseconds(1);
    Gateway gw(stub, o);
    stub->fail_next(2);
    CHECK(gw.complete(request("pick", DecodingConfig::deterministic())).at(0).text == "r0");
    stub->fail_next(3);
    CHECK_THROWS_AS(gw.complete(request("pick", DecodingConfig::deterministic())), TransportError);
  }

  TEST_CASE("unmatched requests are contract errors") {
    auto gw = testsupport::stub_gateway(Json{{"completions", Json::array({Json{{"tag", "only"}, {"replies", "x"}}})}});
    CHECK_THROWS_AS(gw->complete(request("nope", DecodingConfig::deterministic())), ContractError);
  }

  TEST_CASE("ledger and scoped accounting agree") {
    auto gw = testsupport::stub_gateway(echo_rules());
    ScopedClient a(*gw);
    ScopedClient b(*gw);
    a.complete(request("pick", DecodingConfig::self_consistency(3, 0.7, 0)));
    a.nli_classify("p", "h", "acsv/nli");
    b.embed({"one two three"}, "acsv/embed");
    CHECK(a.generation_calls() == 1);
    CHECK(a.generation_samples() == 3);
    CHECK(a.nli_calls("acsv/*") == 1);
    CHECK(b.generation_calls() == 0);
    const auto total = gw->usage_report();
    CHECK(total.total() == a.usage_report().total() + b.usage_report().total());
    CHECK(gw->ledger().size() == 5);  // one row per generated sample
    CHECK(b.usage_report("acsv/embed").input_tokens == 3);
  }

  TEST_CASE("NLI normalization") {
    std::vector<std::string> warnings;
    const auto d = normalize_nli({0.5, 0.3, 0.2005}, &warnings);
    CHECK(d.p_entail + d.p_neutral + d.p_contradict == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(warnings.size() == 1);
    CHECK_THROWS_AS(normalize_nli({0.5, 0.5, 0.5}, nullptr), ReplyFormatError);
    CHECK_THROWS_AS(normalize_nli({-0.1, 0.6, 0.5}, nullptr), ReplyFormatError);
  }

  TEST_CASE("stub NLI directives, identity, and cosine fallback") {
    auto gw = testsupport::stub_gateway();
    const auto d = gw->nli_classify("premise entail:0.95 text", "anything");
    CHECK(d.p_entail == doctest::Approx(0.95));
    CHECK(d.p_neutral == doctest::Approx(0.05));
    const auto same = gw->nli_classify("Same text.", "same text");
    CHECK(same.p_entail == doctest::Approx(0.95));
    const auto other = gw->nli_classify("alpha beta gamma", "delta epsilon");
    CHECK(other.p_entail <= 0.5);
  }

  TEST_CASE("request hash depends on seed and text") {
    auto r1 = request("t", DecodingConfig::deterministic(0));
    auto r2 = request("t", DecodingConfig::deterministic(1));
    CHECK(request_hash("stub", r1) != request_hash("stub", r2));
    CHECK(request_hash("stub", r1) == request_hash("stub", request("t", DecodingConfig::deterministic(0))));
    CHECK(request_hash("a", r1) != request_hash("b", r1));
  }

  TEST_CASE("parallel map keeps order and bounds concurrency") {
    std::atomic<int> live{0};
    std::atomic<int> peak{0};
    const auto out = parallel_map(40, 3, [&](std::size_t i) {
      const int now = ++live;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
      --live;
      return static_cast<int>(i) * 2;
    });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
    CHECK(peak.load() <= 3);
  }

  TEST_CASE("gateway config validation names fields") {
    CHECK_THROWS_AS(load_gateway_config(Json{{"backend", "x"}}, ".", ""), ConfigError);
    try {
      load_gateway_config(Json{{"backend", "x"}, {"backends", {{"x", {{"type", "ftp"}}}}}}, ".", "");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("$.backends.x.type") != std::string::npos);
    }
    const auto ok = load_gateway_config(Json{{"backend", "s"}, {"backends", {{"s", {{"type", "stub"}}}}}, {"max_parallel", 2}},
                                        ".", "");
    CHECK(ok.options.max_parallel == 2);
  }
}
