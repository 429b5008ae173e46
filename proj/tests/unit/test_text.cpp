#include "citecheck/csv.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/text.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace citecheck;

TEST_SUITE("text") {
  TEST_CASE("csv parses quoted fields, embedded newlines, and a BOM") {
    const std::string data = "\xEF\xBB\xBF" "a,b,c\n1,\"x, y\",\"he said \"\"hi\"\"\"\n\n2,\"multi\nline\",z\n";
    const auto t = csv::parse(data);
    REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x, y");
    CHECK(t.rows[0][2] == "he said \"hi\"");
    CHECK(t.rows[1][1] == "multi\nline");
    CHECK(t.column("c") == 2);
    CHECK(t.column("missing") == -1);
  }

  TEST_CASE("csv rejects an unterminated quote") { CHECK_THROWS_AS(csv::parse("a,b\n1,\"open\n"), SchemaError); }

  TEST_CASE("csv format_row round-trips through parse") {
    testsupport::Gen g(11);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> fields;
      const int n = g.integer(1, 6);
      for (int i = 0; i < n; ++i) {
        std::string f = g.word();
        if (g.coin(0.3)) f += ",";
        if (g.coin(0.3)) f += "\"q\"";
        if (g.coin(0.2)) f += "\nnext";
        fields.push_back(f);
      }
      const auto t = csv::parse(csv::format_row(fields) + "\n" + csv::format_row(fields) + "\n");
      REQUIRE(t.rows.size() == 1);
      CHECK(t.header == fields);
      CHECK(t.rows[0] == fields);
    }
  }

  TEST_CASE("citation markers are stripped") {
    CHECK(text::strip_citation_markers("Accuracy improves [1, 3-5].") == "Accuracy improves.");
    CHECK(text::strip_citation_markers("Accuracy improves (Smith et al., 2020; Lee, 2019).") == "Accuracy improves.");
  }

  TEST_CASE("glob matching") {
    CHECK(text::glob_match("acsv/*", "acsv/nli"));
    CHECK(text::glob_match("*", ""));
    CHECK_FALSE(text::glob_match("icsv/*", "acsv/nli"));
    CHECK(text::glob_match("a?c", "abc"));
  }

  TEST_CASE("title similarity is 1 on identical titles and symmetric") {
    testsupport::Gen g(5);
    for (int i = 0; i < 100; ++i) {
      const std::string a = g.sentence();
      const std::string b = g.sentence();
      CHECK(text::title_similarity(a, a) == doctest::Approx(1.0));
      CHECK(text::title_similarity(a, b) == doctest::Approx(text::title_similarity(b, a)));
      const double s = text::title_similarity(a, b);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }

  TEST_CASE("sentence spans partition the non-space content in order") {
    testsupport::Gen g(3);
    for (int trial = 0; trial < 100; ++trial) {
      std::string s;
      const int n = g.integer(1, 6);
      for (int i = 0; i < n; ++i) s += (i ? " " : "") + g.sentence();
      const auto spans = text::sentence_spans(s);
      REQUIRE(spans.size() == static_cast<std::size_t>(n));
      std::size_t prev = 0;
      for (const auto& [b, e] : spans) {
        CHECK(b >= prev);
        CHECK(e > b);
        prev = e;
      }
    }
  }

  TEST_CASE("fill_template replaces known slots and leaves others") {
    CHECK(text::fill_template("a {X} b {Y}", {{"X", "1"}}) == "a 1 b {Y}");
  }

  TEST_CASE("cosine of a vector with itself is 1") {
    CHECK(text::cosine({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(1.0));
    CHECK(text::cosine({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
  }
}
