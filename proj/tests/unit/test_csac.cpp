#include "citecheck/csac.hpp"
#include "citecheck/errors.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace citecheck;

namespace {

BibEntry entry(const std::string& title, std::vector<Author> authors, std::optional<int> year,
               std::optional<std::string> doi = std::nullopt) {
  BibEntry e;
  e.key = "k";
  e.title = title;
  e.authors = std::move(authors);
  e.year = year;
  e.doi = std::move(doi);
  return e;
}

}  // namespace

TEST_SUITE("csac") {
  TEST_CASE("surrogate matching thresholds") {
    MetadataSnapshot m;
    m.title = "Dense passage retrieval for open domain questions";
    m.authors = {{"Karpov", "V"}, {"Oguz", "B"}};
    m.abstract_text = "An abstract.";
    const auto good = csac::match_surrogate(m, entry(m.title, {{"Karpov", "V"}}, 2020));
    CHECK(good.accepted);
    CHECK(good.title_similarity == doctest::Approx(1.0));
    CHECK(good.author_overlap == doctest::Approx(1.0));
    CHECK(good.abstract_present);
    const auto wrong_authors = csac::match_surrogate(m, entry(m.title, {{"Nobody", "N"}, {"Else", "E"}}, 2020));
    CHECK_FALSE(wrong_authors.accepted);
    const auto wrong_title = csac::match_surrogate(m, entry("Completely different words here", {{"Karpov", "V"}}, 2020));
    CHECK_FALSE(wrong_title.accepted);
  }

  TEST_CASE("corpus metadata classifies accessible, metadata-only, and ghost entries") {
    csac::FixtureMetadataClient client(testsupport::fixture("corpus/metadata"));
    const auto t1 = csac::classify_accessibility(entry("Dense passage retrieval for open domain questions",
                                                       {{"Karpov", "V"}}, 2020, "10.5555/t1"),
                                                 client);
    CHECK(t1.status == csac::AccessStatus::Accessible);
    CHECK(t1.resolved_via == "doi");
    REQUIRE(t1.document != nullptr);
    CHECK_FALSE(t1.document->doc.blocks.empty());

    const auto t3 = csac::classify_accessibility(
        entry("Hierarchical graph parsing for long sentences", {{"Lee", "K"}}, 2019, "10.5555/t3"), client);
    CHECK(t3.status == csac::AccessStatus::MetadataOnly);
    CHECK(t3.document == nullptr);
    REQUIRE(t3.record.has_value());
    CHECK(t3.record->meta.id == "t3");

    const auto ghost =
        csac::classify_accessibility(entry("A paper that was never written", {{"Phantom", "P"}}, 2024), client);
    CHECK(ghost.status == csac::AccessStatus::Ghost);
    CHECK_FALSE(ghost.record.has_value());
  }

  TEST_CASE("surrogate search resolves an entry without a DOI") {
    csac::FixtureMetadataClient client(testsupport::fixture("corpus/metadata"));
    const auto v = csac::classify_accessibility(
        entry("Dense passage retrieval for open domain questions", {{"Karpov", "V"}, {"Oguz", "B"}}, 2020), client);
    CHECK(v.status == csac::AccessStatus::Accessible);
    CHECK(v.resolved_via == "surrogate");
    REQUIRE(v.equivalence.has_value());
    CHECK(v.equivalence->accepted);
  }

  TEST_CASE("citing works come from cites lists") {
    csac::FixtureMetadataClient client(testsupport::fixture("corpus/metadata"));
    const auto t3 = client.by_doi("10.5555/t3");
    REQUIRE(t3.has_value());
    const auto citing = client.citing_works(*t3);
    CHECK(citing.size() >= 6);
    for (const auto& r : citing) {
      CHECK(std::find(r.cites.begin(), r.cites.end(), "t3") != r.cites.end());
    }
  }

  TEST_CASE("failing queries raise InconclusiveError") {
    csac::FixtureMetadataClient client;
    client.add(Json{{"records", Json::array({Json{{"id", "x"}, {"title", "Broken lookup"}, {"doi", "10.1/x"}}})},
                    {"fail_queries", Json::array({"10.1/x"})}},
               ".");
    CHECK_THROWS_AS(csac::classify_accessibility(entry("Broken lookup", {}, std::nullopt, "10.1/x"), client),
                    InconclusiveError);
  }

  TEST_CASE("venue types round-trip") {
    for (auto v : {csac::VenueType::Journal, csac::VenueType::Conference, csac::VenueType::Preprint}) {
      CHECK(csac::parse_venue_type(csac::to_string(v)) == v);
    }
    CHECK_FALSE(csac::parse_venue_type("Blog"));
  }
}
