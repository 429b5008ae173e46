#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>

#include "citecheck/errors.hpp"
#include "citecheck/gateway.hpp"
#include "citecheck/text.hpp"

namespace citecheck {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> string_list(const Json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

std::string basename_of(const std::string& path) { return fs::path(path).filename().string(); }

bool rule_matches(const Json& rule, const CompletionRequest& req, const std::string& haystack) {
  if (rule.contains("id")) return false;
  if (!text::glob_match(rule.value("tag", "*"), req.call_tag)) return false;
  if (rule.contains("contains")) {
    for (const auto& needle : string_list(rule.at("contains"))) {
      if (haystack.find(needle) == std::string::npos) return false;
    }
  }
  if (rule.contains("images")) {
    const std::string pattern = rule.at("images").get<std::string>();
    bool any = false;
    for (const auto& img : req.image_parts) {
      if (text::glob_match(pattern, basename_of(img.path))) any = true;
    }
    if (!any) return false;
  }
  return true;
}

std::string render_reply(const Json& rule, const CompletionRequest& req, std::size_t pick) {
  if (rule.contains("echo_between")) {
    const auto markers = rule.at("echo_between").get<std::vector<std::string>>();
    if (markers.size() != 2) throw ContractError("echo_between needs [start, end]");
    const std::string& u = req.user_text;
    std::size_t b = u.find(markers[0]);
    if (b == std::string::npos) throw ContractError("echo_between start marker not in request");
    b += markers[0].size();
    std::size_t e = markers[1].empty() ? u.size() : u.find(markers[1], b);
    if (e == std::string::npos) e = u.size();
    std::string out = text::trim(u.substr(b, e - b));
    if (rule.value("strip_markers", false)) out = text::strip_citation_markers(out);
    if (rule.value("first_sentence", false)) out = text::first_sentence(out);
    return out;
  }
  const Json& replies = rule.contains("replies") ? rule.at("replies") : rule.at("reply");
  const auto list = string_list(replies);
  if (list.empty()) throw ContractError("stub rule has no replies");
  return list[pick % list.size()];
}

std::size_t positive_mod(std::int64_t v, std::size_t n) {
  const auto m = static_cast<std::int64_t>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

}  // namespace

StubBackend::StubBackend(std::string id, bool vision) : id_(std::move(id)), vision_(vision) {}

void StubBackend::load_fixture_dir(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      add_fixtures(Json::parse(in));
    } catch (const Json::exception& e) {
      throw ConfigError(f.string(), std::string("invalid fixture file: ") + e.what());
    }
  }
}

void StubBackend::add_fixtures(const Json& j) {
  if (j.contains("completions")) {
    for (const auto& r : j.at("completions")) completion_rules_.push_back(r);
  }
  if (j.contains("nli")) {
    for (const auto& r : j.at("nli")) nli_rules_.push_back(r);
  }
  if (j.contains("scores")) {
    for (const auto& r : j.at("scores")) score_rules_.push_back(r);
  }
  if (j.contains("by_hash")) {
    for (const auto& [k, v] : j.at("by_hash").items()) by_hash_[k] = v;
  }
}

void StubBackend::fail_next(int n) {
  std::lock_guard<std::mutex> lock(fail_mu_);
  fail_remaining_ = n;
}

void StubBackend::maybe_fail() {
  std::lock_guard<std::mutex> lock(fail_mu_);
  if (fail_remaining_ > 0) {
    --fail_remaining_;
    throw TransportError("stub transport failure");
  }
}

std::vector<Completion> StubBackend::complete(const CompletionRequest& req) {
  maybe_fail();
  const std::string haystack = req.system_text + "\n" + req.user_text;
  const Json* rule = nullptr;
  Json hash_rule;
  const auto hit = by_hash_.find(request_hash(id_, req));
  if (hit != by_hash_.end()) {
    hash_rule = Json{{"replies", hit->second}};
    rule = &hash_rule;
  } else if (!req.fixture_id.empty()) {
    for (const auto& r : completion_rules_) {
      if (r.value("id", "") == req.fixture_id) {
        rule = &r;
        break;
      }
    }
    if (!rule) throw ContractError("no stub fixture with id '" + req.fixture_id + "'");
  } else {
    for (const auto& r : completion_rules_) {
      if (rule_matches(r, req, haystack)) {
        rule = &r;
        break;
      }
    }
    if (!rule) throw ContractError("no stub fixture matches call tag '" + req.call_tag + "'");
  }

  const auto in_tokens = static_cast<std::int64_t>(text::whitespace_token_count(haystack));
  std::vector<Completion> out;
  for (int i = 0; i < req.decoding.sample_count; ++i) {
    const std::int64_t offset = req.decoding.temperature > 0.0 ? i : 0;
    const std::size_t pick = positive_mod(req.decoding.seed + offset, 1u << 30);
    Completion c;
    c.text = render_reply(*rule, req, pick);
    c.usage.input_tokens = in_tokens;
    c.usage.output_tokens = static_cast<std::int64_t>(text::whitespace_token_count(c.text));
    c.usage.call_tag = req.call_tag;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> StubBackend::hash_embedding(const std::string& input) {
  std::vector<double> v(kEmbeddingDim, 0.0);
  const std::string t = " " + text::collapse_whitespace(text::to_lower(input)) + " ";
  if (t.size() < 3) return v;
  for (std::size_t i = 0; i + 3 <= t.size(); ++i) {
    const std::uint64_t h = fnv1a(std::string_view(t).substr(i, 3));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % kEmbeddingDim] += sign;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

EmbedResult StubBackend::embed(const std::vector<std::string>& texts, const std::string& call_tag) {
  maybe_fail();
  EmbedResult r;
  r.usage.call_tag = call_tag;
  for (const auto& t : texts) {
    r.vectors.push_back(hash_embedding(t));
    r.usage.input_tokens += static_cast<std::int64_t>(text::whitespace_token_count(t));
  }
  return r;
}

ScoreResult StubBackend::score_pair(const std::string& query, const std::string& passage, const std::string& call_tag) {
  maybe_fail();
  ScoreResult r;
  r.usage.call_tag = call_tag;
  r.usage.input_tokens = static_cast<std::int64_t>(text::whitespace_token_count(query) + text::whitespace_token_count(passage));
  for (const auto& rule : score_rules_) {
    if (query.find(rule.value("query_contains", "")) != std::string::npos &&
        passage.find(rule.value("passage_contains", "")) != std::string::npos) {
      r.score = rule.at("score").get<double>();
      return r;
    }
  }
  r.score = text::cosine(hash_embedding(query), hash_embedding(passage));
  return r;
}

NliResult StubBackend::nli(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) {
  maybe_fail();
  NliResult r;
  r.usage.call_tag = call_tag;
  r.usage.input_tokens =
      static_cast<std::int64_t>(text::whitespace_token_count(premise) + text::whitespace_token_count(hypothesis));

  for (const auto& rule : nli_rules_) {
    if (premise.find(rule.value("premise_contains", "")) != std::string::npos &&
        hypothesis.find(rule.value("hypothesis_contains", "")) != std::string::npos) {
      r.dist.p_entail = rule.value("entail", 0.0);
      r.dist.p_contradict = rule.value("contradict", 0.0);
      r.dist.p_neutral = rule.contains("neutral") ? rule.at("neutral").get<double>() : 1.0 - r.dist.p_entail - r.dist.p_contradict;
      return r;
    }
  }

  static const std::regex kDirective(R"((entail|neutral|contradict):([0-9]*\.?[0-9]+))");
  bool has_directive = false;
  bool has_neutral = false;
  NliDistribution d{0.0, 0.0, 0.0};
  for (auto it = std::sregex_iterator(premise.begin(), premise.end(), kDirective); it != std::sregex_iterator(); ++it) {
    const std::string label = (*it)[1].str();
    const double p = std::stod((*it)[2].str());
    has_directive = true;
    if (label == "entail") d.p_entail = p;
    if (label == "contradict") d.p_contradict = p;
    if (label == "neutral") {
      d.p_neutral = p;
      has_neutral = true;
    }
  }
  if (has_directive) {
    if (!has_neutral) d.p_neutral = std::max(0.0, 1.0 - d.p_entail - d.p_contradict);
    r.dist = d;
    return r;
  }

  if (text::normalize_for_compare(premise) == text::normalize_for_compare(hypothesis)) {
    r.dist = NliDistribution{0.95, 0.04, 0.01};
    return r;
  }
  const double cos = text::cosine(hash_embedding(premise), hash_embedding(hypothesis));
  r.dist.p_entail = 0.5 * std::max(0.0, cos);
  r.dist.p_contradict = 0.05;
  r.dist.p_neutral = 1.0 - r.dist.p_entail - r.dist.p_contradict;
  return r;
}

}  // namespace citecheck
