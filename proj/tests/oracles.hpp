#pragma once

// Independent scoring helpers shared by the unit tests and the acceptance
// binary. They read ground truth straight from the fixture files and compare
// against library output without reusing library scoring code.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "citecheck/core.hpp"
#include "citecheck/dpcm.hpp"
#include "support.hpp"

namespace oracles {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline citecheck::Json load_json(const std::filesystem::path& p) { return citecheck::Json::parse(slurp(p)); }

// (snippet, 'T' target | 'U' unresolved, key)
using EdgeFact = std::tuple<std::string, char, std::string>;

struct ParseScore {
  std::size_t true_positive = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t documents = 0;
  std::size_t anomalies = 0;
  std::vector<std::string> mismatched;

  double precision() const { return predicted ? static_cast<double>(true_positive) / predicted : 0.0; }
  double recall() const { return gold ? static_cast<double>(true_positive) / gold : 0.0; }
};

// Edge-level precision and recall over the parsing corpus. A predicted edge
// is attributed to the gold snippet contained in its sentence.
inline ParseScore score_parsing_corpus() {
  using namespace citecheck;
  const auto root = std::filesystem::path(testsupport::fixture("parsing"));
  const Json truth = load_json(root / "truth.json");
  ParseScore score;
  for (const auto& [name, t] : truth.items()) {
    dpcm::StyleConfig style;
    style.style = *parse_citation_style(t.at("style").get<std::string>());
    const auto out = dpcm::parse_path((root / "docs" / name).string(), style, nullptr);
    ++score.documents;
    score.anomalies += out.anomalies.size();
    std::set<EdgeFact> gold;
    for (const auto& e : t.at("edges")) {
      const auto snip = e.at("snippet").get<std::string>();
      for (const auto& k : e.at("targets")) gold.emplace(snip, 'T', k.get<std::string>());
      for (const auto& k : e.at("unresolved")) gold.emplace(snip, 'U', k.get<std::string>());
    }
    std::set<EdgeFact> pred;
    for (const auto& e : out.edges) {
      const std::string& sentence = out.doc.sentences.at(e.sentence_index).text;
      std::string tag = sentence;
      for (const auto& g : t.at("edges")) {
        const auto snip = g.at("snippet").get<std::string>();
        if (sentence.find(snip) != std::string::npos) {
          tag = snip;
          break;
        }
      }
      for (const auto& k : e.target_keys) pred.emplace(tag, 'T', k);
      for (const auto& k : e.unresolved_markers) pred.emplace(tag, 'U', k);
    }
    std::size_t tp = 0;
    for (const auto& f : pred) tp += gold.count(f);
    score.true_positive += tp;
    score.predicted += pred.size();
    score.gold += gold.size();
    if (pred != gold) score.mismatched.push_back(name);
  }
  return score;
}

inline std::vector<citecheck::dpcm::PageTranscript> load_pages(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".md") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<citecheck::dpcm::PageTranscript> pages;
  for (std::size_t i = 0; i < files.size(); ++i) {
    citecheck::dpcm::PageTranscript t;
    t.page_index = static_cast<int>(i) + 1;
    t.markdown = slurp(files[i]);
    pages.push_back(std::move(t));
  }
  return pages;
}

struct MergeScore {
  std::size_t cases = 0;
  std::size_t exact = 0;
  std::vector<std::string> mismatched;
};

inline MergeScore score_merge_corpus() {
  const auto root = std::filesystem::path(testsupport::fixture("merge"));
  MergeScore s;
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    ++s.cases;
    const auto merged = citecheck::dpcm::merge_pages(load_pages(d), nullptr);
    const auto expected = slurp(root / (d.filename().string() + ".expected.md"));
    if (merged.text + "\n" == expected)
      ++s.exact;
    else
      s.mismatched.push_back(d.filename().string());
  }
  return s;
}

struct VerifierScore {
  std::size_t planted = 0;
  std::size_t found = 0;  // planted anomalies matched on kind and span
  std::size_t spurious = 0;
};

// Planted anomalies must match on kind and exact block span; any other
// anomaly counts as spurious.
inline VerifierScore score_verifier_corpus() {
  using namespace citecheck;
  const auto root = std::filesystem::path(testsupport::fixture("verifier"));
  const Json truth = load_json(root / "truth.json");
  VerifierScore s;
  for (const auto& [name, planted] : truth.items()) {
    const auto doc = dpcm::parse_transcript(slurp(root / name), dpcm::StyleConfig{}, name);
    const auto found = dpcm::verify_extraction(doc);
    std::vector<bool> used(found.size(), false);
    for (const auto& p : planted) {
      ++s.planted;
      for (std::size_t i = 0; i < found.size(); ++i) {
        if (used[i]) continue;
        if (dpcm::to_string(found[i].kind) == p.at("kind").get<std::string>() &&
            found[i].block_begin == p.at("block_begin").get<std::size_t>() &&
            found[i].block_end == p.at("block_end").get<std::size_t>()) {
          used[i] = true;
          ++s.found;
          break;
        }
      }
    }
    for (bool u : used) s.spurious += u ? 0 : 1;
  }
  return s;
}

// Committee generator: gamma from positive random supports, votes in
// {-1,0,1}, stabilities in {1/3, 2/3, 1}.
struct Committee {
  std::vector<double> gamma;
  std::vector<int> votes;
  std::vector<double> stability;
  std::size_t size = 0;
};

inline Committee random_committee(testsupport::Gen& g, int max_clusters = 8) {
  Committee c;
  const int m = g.integer(1, max_clusters);
  std::vector<double> support;
  double total = 0.0;
  for (int j = 0; j < m; ++j) {
    support.push_back(g.uniform(0.01, 3.0));
    total += support.back();
  }
  for (int j = 0; j < m; ++j) {
    c.gamma.push_back(support[j] / total);
    c.votes.push_back(g.integer(-1, 1));
    c.stability.push_back(static_cast<double>(g.integer(1, 3)) / 3.0);
  }
  c.size = static_cast<std::size_t>(g.integer(1, 12));
  return c;
}

struct CalibrationOracle {
  double v = 0.0;
  double n_eff = 0.0;
  double entropy = 0.0;
  double a_bar = 0.0;
  double conf = 0.0;
  std::vector<std::string> triggers;
  std::string label;
};

// Straight-line recomputation of the committee calibration, written from the
// formulas without calling library code.
inline CalibrationOracle oracle_calibrate(const Committee& c, int k_min = 6, double t_support = 0.3,
                                          double t_miscite = -0.3, double conf_min = 0.5, double h_max = 0.6) {
  CalibrationOracle o;
  double sq = 0.0, w_pos = 0.0, w_neu = 0.0, w_neg = 0.0;
  for (std::size_t j = 0; j < c.gamma.size(); ++j) {
    o.v += c.gamma[j] * c.votes[j];
    sq += c.gamma[j] * c.gamma[j];
    o.a_bar += c.gamma[j] * c.stability[j];
    if (c.votes[j] > 0) w_pos += c.gamma[j];
    if (c.votes[j] == 0) w_neu += c.gamma[j];
    if (c.votes[j] < 0) w_neg += c.gamma[j];
  }
  o.n_eff = 1.0 / sq;
  double h = 0.0;
  for (double w : {w_pos, w_neu, w_neg}) h += -w * std::log(w + 1e-12);
  h /= std::log(3.0);
  o.entropy = h < 0.0 ? 0.0 : (h > 1.0 ? 1.0 : h);
  const double suff = o.n_eff / k_min < 1.0 ? o.n_eff / k_min : 1.0;
  o.conf = std::fabs(o.v) * suff * (1.0 - o.entropy) * o.a_bar;
  if (c.size < static_cast<std::size_t>(k_min)) o.triggers.push_back("InsufficientWitnesses");
  if (!(o.v > t_support) && !(o.v < t_miscite)) o.triggers.push_back("LowMargin");
  if (o.conf < conf_min) o.triggers.push_back("LowConfidence");
  if (o.entropy > h_max) o.triggers.push_back("HighDisagreement");
  if (!o.triggers.empty())
    o.label = "Undecidable";
  else
    o.label = o.v > 0 ? "Supported" : "Miscitation";
  return o;
}

}  // namespace oracles
