#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "citecheck/acsv.hpp"
#include "citecheck/core.hpp"
#include "citecheck/csac.hpp"
#include "citecheck/dpcm.hpp"
#include "citecheck/gateway.hpp"
#include "citecheck/icsv.hpp"
#include "citecheck/taxonomy.hpp"

// End-to-end orchestration: parse, route, verify, label, report.
namespace citecheck::pipeline {

enum class RouteMode { Auto, Accessible, Inaccessible };
std::optional<RouteMode> parse_route_mode(std::string_view s);

struct RunConfig {
  std::vector<std::string> inputs;
  std::string config_path;
  std::string base_dir;  // directory of the config file
  Json config = Json::object();
  std::string backend_override;
  std::string cache_dir;  // overrides $.cache.dir when non-empty
  std::string out_dir = "out";
  std::int64_t seed = 0;
  std::optional<int> max_parallel;
  RouteMode route = RouteMode::Auto;

  acsv::FunnelConfig funnel;
  icsv::CommitteeConfig committee;
  taxonomy::LabelerConfig labeler;
  dpcm::StyleConfig style;
  std::string metadata_dir;          // fixture metadata store
  std::string reference_stats_path;  // optional CSV
};

// Reads the JSON config file and applies its funnel, committee, taxonomy,
// style, metadata, and reference_stats sections. Throws ConfigError with the
// field path.
void load_config_file(RunConfig& config, const std::string& path);
// Re-applies the seed to the nested configs; call after overrides.
void finalize(RunConfig& config);

struct Services {
  std::shared_ptr<Gateway> gateway;
  std::shared_ptr<csac::MetadataClient> index;
  icsv::ReferenceStats stats;
};

Services make_services(const RunConfig& config);

struct DocumentReport {
  std::string path;
  std::string doc_id;
  std::size_t edges = 0;
  std::vector<VerificationResult> results;
  std::vector<dpcm::ExtractionAnomaly> anomalies;
  std::optional<std::string> error;  // fatal for this document
};

// One result per (edge, target); unresolved markers become ghost results.
DocumentReport verify_document(const std::string& path, const RunConfig& config, Services& services);

// Counts per verdict and per code, mean confidence, abstention rate, per
// document and overall.
Json summarize(const std::vector<DocumentReport>& reports);
std::string markdown_digest(const Json& summary, const std::vector<DocumentReport>& reports);

// File name of a bundle; stable across runs.
std::string bundle_file_name(std::size_t index, const VerificationResult& r);

// Writes bundles/<doc_id>/*.json, summary.json, and summary.md under out_dir.
// Returns true when any result or document carries an error.
bool write_verify_outputs(const std::vector<DocumentReport>& reports, const std::string& out_dir);

}  // namespace citecheck::pipeline
