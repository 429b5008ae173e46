#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "citecheck/core.hpp"
#include "citecheck/dpcm.hpp"

// Source accessibility: resolve each bibliography entry to full text,
// metadata only, or nothing (a ghost citation).
namespace citecheck::csac {

enum class VenueType { Journal, Conference, Preprint };
std::string to_string(VenueType v);
std::optional<VenueType> parse_venue_type(std::string_view s);

// A paper known to the citation index, with the fields the committee and
// influence scoring need.
struct IndexRecord {
  MetadataSnapshot meta;
  bool open_access = false;
  std::string full_text_path;  // empty when no full text is retrievable
  VenueType venue_type = VenueType::Journal;
  std::int64_t citation_count = 0;
  std::string field;
  // Venue standing inputs; absent values are missing.
  std::optional<double> impact_factor;
  std::optional<double> conference_metric;
  std::optional<double> two_year_rate;
  std::optional<double> long_run_rate;
  std::optional<double> repository_rate;
  std::vector<std::string> cites;  // record ids of works this record cites
};

// Query-by-DOI, query-by-metadata, fetch-full-text, and citing-work
// enumeration. Implementations throw TransportError on network failure.
class MetadataClient {
 public:
  virtual ~MetadataClient() = default;
  virtual std::optional<IndexRecord> by_doi(const std::string& doi) = 0;
  virtual std::vector<IndexRecord> by_metadata(const std::string& title, const std::vector<Author>& authors,
                                               std::optional<int> year) = 0;
  // Path of a DPCM-readable full text, if one can be retrieved.
  virtual std::optional<std::string> full_text(const IndexRecord& record) = 0;
  virtual std::vector<IndexRecord> citing_works(const IndexRecord& target) = 0;
};

// Fixture store: every *.json file in a directory holds
//   {"records": [{"id", "title", "authors", "doi", "year", "venue", "abstract",
//                 "retracted", "article_type", "open_access", "full_text",
//                 "venue_type", "citation_count", "field", "impact_factor",
//                 "conference_metric", "two_year_rate", "long_run_rate",
//                 "repository_rate", "cites": [ids]}],
//    "fail_queries": ["<doi or normalized title>"]}
// Metadata queries return records whose normalized title similarity with
// the query is at least 0.6; full_text paths resolve against the file's
// directory.
class FixtureMetadataClient : public MetadataClient {
 public:
  FixtureMetadataClient() = default;
  explicit FixtureMetadataClient(const std::string& dir);
  void add(const Json& fixture_file, const std::string& base_dir);

  std::optional<IndexRecord> by_doi(const std::string& doi) override;
  std::vector<IndexRecord> by_metadata(const std::string& title, const std::vector<Author>& authors,
                                       std::optional<int> year) override;
  std::optional<std::string> full_text(const IndexRecord& record) override;
  std::vector<IndexRecord> citing_works(const IndexRecord& target) override;

  const std::vector<IndexRecord>& records() const { return records_; }

 private:
  void maybe_fail(const std::string& query) const;

  std::vector<IndexRecord> records_;
  std::vector<std::string> fail_queries_;
};

IndexRecord record_from_json(const Json& j, const std::string& base_dir);
Json to_json(const IndexRecord& r);

struct MatchReport {
  double title_similarity = 0.0;
  double author_overlap = 0.0;
  bool abstract_present = false;
  std::optional<double> reference_overlap;
  bool accepted = false;
};
Json to_json(const MatchReport& m);

struct MatchThresholds {
  double title = 0.9;
  double authors = 0.5;
};

// Title similarity, overlap of family names (over the entry's list), abstract
// presence, and optionally the overlap of two reference lists by title.
MatchReport match_surrogate(const MetadataSnapshot& candidate, const BibEntry& entry,
                            const std::vector<BibEntry>* candidate_refs = nullptr,
                            const std::vector<BibEntry>* entry_refs = nullptr, const MatchThresholds& t = {});

enum class AccessStatus { Accessible, MetadataOnly, Ghost };
std::string to_string(AccessStatus s);

struct AccessibilityVerdict {
  AccessStatus status = AccessStatus::Ghost;
  std::optional<IndexRecord> record;
  std::shared_ptr<const dpcm::ParseOutput> document;  // Accessible only
  std::optional<MatchReport> equivalence;
  std::string resolved_via;  // "doi", "surrogate", or empty
};
Json to_json(const AccessibilityVerdict& v);

// DOI resolution, then full text, then surrogate search by title, authors,
// and year. Transport failures raise InconclusiveError.
AccessibilityVerdict classify_accessibility(const BibEntry& entry, MetadataClient& client,
                                            const dpcm::StyleConfig& style = {}, const MatchThresholds& t = {});

}  // namespace citecheck::csac
