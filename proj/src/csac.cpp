#include "citecheck/csac.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "citecheck/errors.hpp"
#include "citecheck/text.hpp"

namespace citecheck::csac {

namespace fs = std::filesystem;

std::string to_string(VenueType v) {
  switch (v) {
    case VenueType::Journal: return "Journal";
    case VenueType::Conference: return "Conference";
    case VenueType::Preprint: return "Preprint";
  }
  return "Journal";
}

std::optional<VenueType> parse_venue_type(std::string_view s) {
  const std::string t = text::to_lower(s);
  if (t == "journal") return VenueType::Journal;
  if (t == "conference" || t == "proceedings") return VenueType::Conference;
  if (t == "preprint") return VenueType::Preprint;
  return std::nullopt;
}

std::string to_string(AccessStatus s) {
  switch (s) {
    case AccessStatus::Accessible: return "Accessible";
    case AccessStatus::MetadataOnly: return "MetadataOnly";
    case AccessStatus::Ghost: return "Ghost";
  }
  return "Ghost";
}

namespace {

std::optional<double> opt_number(const Json& j, const char* key) {
  if (j.contains(key) && j.at(key).is_number()) return j.at(key).get<double>();
  return std::nullopt;
}

std::string normalize_doi(std::string d) {
  d = text::to_lower(text::trim(d));
  for (const char* prefix : {"https://doi.org/", "http://doi.org/", "doi:"}) {
    if (d.rfind(prefix, 0) == 0) d = d.substr(std::string(prefix).size());
  }
  return d;
}

}  // namespace

IndexRecord record_from_json(const Json& j, const std::string& base_dir) {
  IndexRecord r;
  r.meta = metadata_from_json(j);
  if (r.meta.source_of_record.empty()) r.meta.source_of_record = "fixture";
  r.open_access = j.value("open_access", false);
  const std::string ft = j.value("full_text", "");
  if (!ft.empty()) r.full_text_path = fs::path(ft).is_absolute() ? ft : (fs::path(base_dir) / ft).string();
  const std::string vt = j.value("venue_type", "Journal");
  const auto parsed = parse_venue_type(vt);
  if (!parsed) throw SchemaError("record '" + r.meta.id + "': unknown venue_type '" + vt + "'");
  r.venue_type = *parsed;
  r.citation_count = j.value("citation_count", static_cast<std::int64_t>(0));
  if (r.citation_count < 0) throw SchemaError("record '" + r.meta.id + "': negative citation_count");
  r.field = j.value("field", "");
  r.impact_factor = opt_number(j, "impact_factor");
  r.conference_metric = opt_number(j, "conference_metric");
  r.two_year_rate = opt_number(j, "two_year_rate");
  r.long_run_rate = opt_number(j, "long_run_rate");
  r.repository_rate = opt_number(j, "repository_rate");
  if (j.contains("cites")) r.cites = j.at("cites").get<std::vector<std::string>>();
  return r;
}

Json to_json(const IndexRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"metadata", citecheck::to_json(r.meta)},
              {"open_access", r.open_access},
              {"has_full_text", !r.full_text_path.empty()},
              {"venue_type", to_string(r.venue_type)},
              {"citation_count", r.citation_count},
              {"field", r.field},
              {"impact_factor", opt(r.impact_factor)},
              {"conference_metric", opt(r.conference_metric)},
              {"two_year_rate", opt(r.two_year_rate)},
              {"long_run_rate", opt(r.long_run_rate)},
              {"repository_rate", opt(r.repository_rate)}};
}

FixtureMetadataClient::FixtureMetadataClient(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("metadata", "fixture directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (de.path().extension() == ".json") files.push_back(de.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::exception& e) {
      throw SchemaError("metadata fixture " + f.string() + ": " + e.what());
    }
    add(j, f.parent_path().string());
  }
}

void FixtureMetadataClient::add(const Json& fixture_file, const std::string& base_dir) {
  if (fixture_file.contains("records")) {
    for (const auto& r : fixture_file.at("records")) records_.push_back(record_from_json(r, base_dir));
  }
  if (fixture_file.contains("fail_queries")) {
    for (const auto& q : fixture_file.at("fail_queries")) fail_queries_.push_back(q.get<std::string>());
  }
}

void FixtureMetadataClient::maybe_fail(const std::string& query) const {
  for (const auto& q : fail_queries_) {
    if (q == query) throw TransportError("fixture transport failure for '" + query + "'");
  }
}

std::optional<IndexRecord> FixtureMetadataClient::by_doi(const std::string& doi) {
  const std::string d = normalize_doi(doi);
  maybe_fail(d);
  for (const auto& r : records_) {
    if (r.meta.doi && normalize_doi(*r.meta.doi) == d) return r;
  }
  return std::nullopt;
}

std::vector<IndexRecord> FixtureMetadataClient::by_metadata(const std::string& title, const std::vector<Author>&,
                                                            std::optional<int>) {
  maybe_fail(text::normalize_title(title));
  std::vector<IndexRecord> out;
  if (text::trim(title).empty()) return out;
  for (const auto& r : records_) {
    if (text::title_similarity(r.meta.title, title) >= 0.6) out.push_back(r);
  }
  return out;
}

std::optional<std::string> FixtureMetadataClient::full_text(const IndexRecord& record) {
  if (record.full_text_path.empty() || !fs::exists(record.full_text_path)) return std::nullopt;
  return record.full_text_path;
}

std::vector<IndexRecord> FixtureMetadataClient::citing_works(const IndexRecord& target) {
  maybe_fail("citing:" + target.meta.id);
  std::vector<IndexRecord> out;
  for (const auto& r : records_) {
    if (std::find(r.cites.begin(), r.cites.end(), target.meta.id) != r.cites.end()) out.push_back(r);
  }
  return out;
}

Json to_json(const MatchReport& m) {
  return Json{{"title_similarity", m.title_similarity},
              {"author_overlap", m.author_overlap},
              {"abstract_present", m.abstract_present},
              {"reference_overlap", m.reference_overlap ? Json(*m.reference_overlap) : Json(nullptr)},
              {"accepted", m.accepted}};
}

MatchReport match_surrogate(const MetadataSnapshot& candidate, const BibEntry& entry,
                            const std::vector<BibEntry>* candidate_refs, const std::vector<BibEntry>* entry_refs,
                            const MatchThresholds& t) {
  MatchReport m;
  m.title_similarity = text::title_similarity(candidate.title, entry.title);
  std::set<std::string> cand;
  for (const auto& a : candidate.authors) cand.insert(text::normalize_family_name(a.family));
  std::set<std::string> want;
  for (const auto& a : entry.authors) want.insert(text::normalize_family_name(a.family));
  std::size_t hit = 0;
  for (const auto& f : want) hit += cand.count(f);
  m.author_overlap = want.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(want.size());
  m.abstract_present = candidate.abstract_text && !text::trim(*candidate.abstract_text).empty();
  if (candidate_refs && entry_refs && !candidate_refs->empty() && !entry_refs->empty()) {
    std::set<std::string> a;
    std::set<std::string> b;
    for (const auto& e : *candidate_refs) a.insert(text::normalize_title(e.title));
    for (const auto& e : *entry_refs) b.insert(text::normalize_title(e.title));
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    const std::size_t uni = a.size() + b.size() - inter;
    m.reference_overlap = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  m.accepted = m.title_similarity >= t.title && m.author_overlap >= t.authors;
  return m;
}

Json to_json(const AccessibilityVerdict& v) {
  Json j{{"status", to_string(v.status)}, {"resolved_via", v.resolved_via}};
  j["record"] = v.record ? to_json(*v.record) : Json(nullptr);
  j["equivalence"] = v.equivalence ? to_json(*v.equivalence) : Json(nullptr);
  j["document"] = v.document ? Json(v.document->doc.doc_id) : Json(nullptr);
  return j;
}

namespace {

std::shared_ptr<const dpcm::ParseOutput> try_parse(const std::string& path, const dpcm::StyleConfig& style) {
  try {
    auto out = std::make_shared<dpcm::ParseOutput>(dpcm::parse_path(path, style, nullptr));
    const bool has_text = std::any_of(out->doc.blocks.begin(), out->doc.blocks.end(),
                                      [](const Block& b) { return b.kind == BlockKind::Paragraph; });
    if (!has_text) return nullptr;
    return out;
  } catch (const ParseError&) {
    return nullptr;
  } catch (const ContractError&) {
    return nullptr;
  }
}

}  // namespace

AccessibilityVerdict classify_accessibility(const BibEntry& entry, MetadataClient& client, const dpcm::StyleConfig& style,
                                            const MatchThresholds& t) {
  AccessibilityVerdict v;
  try {
    std::optional<IndexRecord> resolved;
    if (entry.doi) resolved = client.by_doi(*entry.doi);
    if (resolved) {
      if (auto path = client.full_text(*resolved)) {
        if (auto doc = try_parse(*path, style)) {
          v.status = AccessStatus::Accessible;
          v.record = resolved;
          v.document = std::move(doc);
          v.resolved_via = "doi";
          return v;
        }
      }
    }
    // Open-access surrogates must pass the equivalence check.
    std::optional<IndexRecord> surrogate;
    std::optional<MatchReport> surrogate_report;
    for (const auto& cand : client.by_metadata(entry.title, entry.authors, entry.year)) {
      const MatchReport m = match_surrogate(cand.meta, entry, nullptr, nullptr, t);
      if (!m.accepted) {
        if (!v.equivalence || m.title_similarity > v.equivalence->title_similarity) v.equivalence = m;
        continue;
      }
      if (auto path = client.full_text(cand)) {
        if (auto doc = try_parse(*path, style)) {
          v.status = AccessStatus::Accessible;
          v.record = cand;
          v.document = std::move(doc);
          v.equivalence = m;
          v.resolved_via = "surrogate";
          return v;
        }
      }
      if (!surrogate) {
        surrogate = cand;
        surrogate_report = m;
      }
    }
    if (resolved) {
      v.status = AccessStatus::MetadataOnly;
      v.record = resolved;
      v.resolved_via = "doi";
      return v;
    }
    if (surrogate) {
      v.status = AccessStatus::MetadataOnly;
      v.record = surrogate;
      v.equivalence = surrogate_report;
      v.resolved_via = "surrogate";
      return v;
    }
  } catch (const TransportError& e) {
    throw InconclusiveError("accessibility of '" + entry.key + "' undetermined: " + e.what());
  }
  v.status = AccessStatus::Ghost;
  return v;
}

}  // namespace citecheck::csac
