#include <cctype>
#include <map>

#include "citecheck/dpcm.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/text.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace citecheck;

namespace {

std::map<std::string, int> word_multiset(const std::string& s) {
  std::map<std::string, int> m;
  std::string w;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      w += c;
    } else if (!w.empty()) {
      ++m[w];
      w.clear();
    }
  }
  if (!w.empty()) ++m[w];
  return m;
}

}  // namespace

TEST_SUITE("dpcm") {
  TEST_CASE("numeric marker expansion") {
    CHECK(dpcm::expand_numeric("3\xE2\x80\x93" "5") == std::vector<int>{3, 4, 5});
    CHECK(dpcm::expand_numeric("3-5") == std::vector<int>{3, 4, 5});
    CHECK(dpcm::expand_numeric("1, 3--4, 9") == std::vector<int>{1, 3, 4, 9});
    CHECK(dpcm::expand_numeric("7") == std::vector<int>{7});
    CHECK(dpcm::expand_numeric("5-3").empty());
    CHECK(dpcm::expand_numeric("0").empty());
    CHECK(dpcm::expand_numeric("Smith 2020").empty());
  }

  TEST_CASE("parsing corpus reaches full precision and recall") {
    const auto score = oracles::score_parsing_corpus();
    CHECK(score.documents == 20);
    CHECK(score.mismatched.empty());
    CHECK(score.precision() == doctest::Approx(1.0));
    CHECK(score.recall() == doctest::Approx(1.0));
    CHECK(score.anomalies == 0);
  }

  TEST_CASE("page merges are byte-exact") {
    const auto score = oracles::score_merge_corpus();
    CHECK(score.cases == 6);
    CHECK(score.exact == score.cases);
    CHECK(score.mismatched.empty());
  }

  TEST_CASE("a hyphenated page break keeps the hyphen") {
    const auto root = std::filesystem::path(testsupport::fixture("merge/hyphen"));
    const auto merged = dpcm::merge_pages(oracles::load_pages(root), nullptr);
    REQUIRE(merged.boundaries.size() == 1);
    CHECK(merged.boundaries[0] == dpcm::BoundaryAction::Hyphen);
    CHECK(merged.text.find("multi-agent") != std::string::npos);
    CHECK(merged.page_at(0) == 1);
    CHECK(merged.page_at(merged.text.size() - 1) == 2);
  }

  TEST_CASE("extraction verifier finds planted anomalies and nothing else") {
    const auto score = oracles::score_verifier_corpus();
    CHECK(score.planted == 3);
    CHECK(score.found == 3);
    CHECK(score.spurious == 0);
  }

  TEST_CASE("boundary heuristics") {
    CHECK(dpcm::tail_is_complete("The run ends here."));
    CHECK_FALSE(dpcm::tail_is_complete("The run continues with"));
    CHECK_FALSE(dpcm::tail_is_complete("cooperative multi-"));
    CHECK(dpcm::head_is_continuation("and then the rest"));
    CHECK_FALSE(dpcm::head_is_continuation("# Heading"));
    CHECK_FALSE(dpcm::head_is_continuation("New sentence begins."));
  }

  TEST_CASE("merging preserves the word multiset of unhyphenated pages") {
    testsupport::Gen g(21);
    for (int trial = 0; trial < 150; ++trial) {
      std::vector<dpcm::PageTranscript> pages;
      std::string all;
      const int n = g.integer(1, 5);
      for (int p = 0; p < n; ++p) {
        std::string md;
        const int paras = g.integer(1, 3);
        for (int k = 0; k < paras; ++k) {
          if (k) md += "\n\n";
          md += g.sentence() + " " + g.sentence();
        }
        // Some pages stop mid-sentence and the next page resumes in lowercase.
        if (g.coin(0.4)) md += " " + g.word() + " " + g.word();
        if (p > 0 && g.coin(0.4)) md = g.word() + " " + md;
        dpcm::PageTranscript t;
        t.page_index = p + 1;
        t.markdown = md;
        all += md + "\n";
        pages.push_back(t);
      }
      const auto merged = dpcm::merge_pages(pages, nullptr);
      CHECK(word_multiset(merged.text) == word_multiset(all));
      CHECK(merged.boundaries.size() == static_cast<std::size_t>(n - 1));
      CHECK(merged.page_starts.size() == static_cast<std::size_t>(n));
    }
  }

  TEST_CASE("merge rejects unordered pages") {
    dpcm::PageTranscript a;
    a.page_index = 2;
    a.markdown = "x.";
    dpcm::PageTranscript b;
    b.page_index = 1;
    b.markdown = "y.";
    CHECK_THROWS_AS(dpcm::merge_pages({a, b}, nullptr), ContractError);
  }

  TEST_CASE("reference strings parse into entries") {
    const auto e = dpcm::parse_reference_string(
        "[7] A. Smith and B. Jones. Scaling laws for retrieval agents. Proc. of Things, 2020. doi:10.1000/xyz1", 7);
    CHECK(e.year == 2020);
    REQUIRE(e.authors.size() >= 2);
    CHECK(text::normalize_family_name(e.authors[0].family) == "smith");
    CHECK(e.title.find("Scaling laws") != std::string::npos);
    REQUIRE(e.doi.has_value());
    CHECK(*e.doi == "10.1000/xyz1");
  }

  TEST_CASE("author-year parts and scoring") {
    const auto c = dpcm::parse_author_year("Smith et al., 2020a");
    REQUIRE(c.has_value());
    CHECK(c->year == 2020);
    CHECK(c->year_suffix == "a");
    BibEntry e;
    e.authors = {{"Smith", "A"}};
    e.year = 2020;
    e.title_tokens = {"scaling", "agents"};
    const double s = dpcm::author_year_score(*c, e, "Scaling helps agents.");
    CHECK(s >= 0.8);
    CHECK(s <= 1.0 + 1e-12);
    e.year = 2011;
    CHECK(dpcm::author_year_score(*c, e, "Unrelated.") < 0.8);
  }

  TEST_CASE("unbalanced markup is a parse error") {
    CHECK_THROWS_AS(dpcm::normalize_markup("\\begin{document} text {unclosed", dpcm::StyleConfig{}, "x",
                                           dpcm::MarkupKind::Latex),
                    ParseError);
    CHECK_THROWS_AS(dpcm::normalize_markup("<article><p>open</article>", dpcm::StyleConfig{}, "x", dpcm::MarkupKind::Xml),
                    ParseError);
  }

  TEST_CASE("markup citations become anchors with unresolved keys") {
    const std::string tex =
        "\\section{Intro}\nAgents help \\cite{a,zz}.\n\\begin{thebibliography}{9}\n\\bibitem{a} A. Smith. Title one. "
        "Venue, 2020.\n\\end{thebibliography}\n";
    const auto doc = dpcm::normalize_markup(tex, dpcm::StyleConfig{}, "t", dpcm::MarkupKind::Latex);
    REQUIRE(doc.anchors.size() == 1);
    CHECK(doc.anchors[0].keys == std::vector<std::string>{"a", "zz"});
    CHECK(doc.anchors[0].unresolved == std::vector<std::string>{"zz"});
  }
}
