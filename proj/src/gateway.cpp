#include "citecheck/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "citecheck/errors.hpp"
#include "citecheck/text.hpp"

namespace citecheck {

namespace fs = std::filesystem;

void DecodingConfig::validate() const {
  if (sample_count < 1) throw ContractError("sample_count must be >= 1");
  if (!(temperature >= 0.0)) throw ContractError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ContractError("nucleus mass must be in (0,1]");
}

std::string to_string(CallKind kind) {
  switch (kind) {
    case CallKind::Generation: return "generation";
    case CallKind::Embedding: return "embedding";
    case CallKind::Rerank: return "rerank";
    case CallKind::Nli: return "nli";
  }
  return "?";
}

NliDistribution normalize_nli(NliDistribution d, std::vector<std::string>* warnings) {
  for (double p : {d.p_entail, d.p_neutral, d.p_contradict}) {
    if (!(p >= 0.0) || p > 1.0 + 1e-9) throw ReplyFormatError("NLI probability outside [0,1]", std::to_string(p));
  }
  const double sum = d.p_entail + d.p_neutral + d.p_contradict;
  if (std::abs(sum - 1.0) <= 1e-12) return d;
  if (std::abs(sum - 1.0) > 1e-3) {
    std::ostringstream os;
    os << d.p_entail << "," << d.p_neutral << "," << d.p_contradict;
    throw ReplyFormatError("NLI distribution does not sum to 1", os.str());
  }
  if (warnings) warnings->push_back("nli distribution renormalized from sum " + std::to_string(sum));
  d.p_entail /= sum;
  d.p_neutral /= sum;
  d.p_contradict /= sum;
  return d;
}

namespace {

Json request_payload(const CompletionRequest& r) {
  Json images = Json::array();
  for (const auto& img : r.image_parts) images.push_back(Json{{"path", img.path}, {"mime", img.mime}});
  return Json{{"system", r.system_text},
              {"user", r.user_text},
              {"images", images},
              {"decoding",
               Json{{"temperature", r.decoding.temperature},
                    {"top_p", r.decoding.top_p},
                    {"sample_count", r.decoding.sample_count},
                    {"seed", r.decoding.seed}}},
              {"call_tag", r.call_tag},
              {"fixture_id", r.fixture_id}};
}

std::string hash_of(const std::string& backend_id, const std::string& kind, const Json& payload) {
  return text::sha256_hex(backend_id + "\n" + kind + "\n" + payload.dump());
}

Json usage_json(const TokenUsage& u) { return Json{{"in", u.input_tokens}, {"out", u.output_tokens}}; }

TokenUsage usage_from(const Json& j, const std::string& tag) {
  TokenUsage u;
  u.input_tokens = j.at("in").get<std::int64_t>();
  u.output_tokens = j.at("out").get<std::int64_t>();
  u.call_tag = tag;
  return u;
}

}  // namespace

std::string request_hash(const std::string& backend_id, const CompletionRequest& request) {
  return hash_of(backend_id, "complete", request_payload(request));
}

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)), in_flight_(options_.max_parallel) {
  if (!backend_) throw ContractError("gateway needs a backend");
  if (options_.max_attempts < 1) throw ContractError("max_attempts must be >= 1");
  backend_id_ = backend_->id();
  if (!options_.cache.dir.empty()) fs::create_directories(options_.cache.dir);
}

bool Gateway::cache_allowed(const std::string& tag, bool deterministic) const {
  if (!options_.cache.enabled) return false;
  for (const auto& [pattern, on] : options_.cache.tag_overrides) {
    if (text::glob_match(pattern, tag)) return on;
  }
  return deterministic;
}

std::optional<Json> Gateway::cache_get(const std::string& key) {
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
  }
  if (options_.cache.dir.empty()) return std::nullopt;
  const fs::path path = fs::path(options_.cache.dir) / (key + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  Json payload;
  try {
    payload = Json::parse(in);
  } catch (const std::exception&) {
    return std::nullopt;  // torn or foreign file: treat as a miss
  }
  std::lock_guard<std::mutex> lock(cache_mu_);
  cache_.emplace(key, payload);
  return payload;
}

void Gateway::cache_put(const std::string& key, const Json& payload) {
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    cache_[key] = payload;
  }
  if (options_.cache.dir.empty()) return;
  const fs::path dir(options_.cache.dir);
  const fs::path tmp = dir / (key + ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp);
    out << payload.dump();
  }
  fs::rename(tmp, dir / (key + ".json"));
}

void Gateway::record(const std::string& tag, CallKind kind, std::int64_t in, std::int64_t out) {
  if (in < 0 || out < 0) throw ReplyFormatError("negative token count", tag);
  std::lock_guard<std::mutex> lock(ledger_mu_);
  ledger_.push_back(LedgerRow{tag, kind, in, out});
}

template <typename Fn>
auto Gateway::with_retry(Fn&& fn) -> decltype(fn()) {
  {
    std::lock_guard<std::mutex> lock(ledger_mu_);
    ++backend_calls_;
  }
  for (int attempt = 1;; ++attempt) {
    try {
      SemaphoreGuard guard(in_flight_);
      return fn();
    } catch (const TransportError& e) {
      if (attempt >= options_.max_attempts) throw TransportError(e.what(), attempt);
    }
    std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
  }
}

std::vector<Completion> Gateway::complete(const CompletionRequest& request) {
  request.decoding.validate();
  if (!request.image_parts.empty() && !backend_->supports_vision())
    throw ContractError("backend '" + backend_id_ + "' does not accept image parts");

  const bool cacheable = !request.bypass_cache && cache_allowed(request.call_tag, request.decoding.temperature == 0.0);
  const std::string key = cacheable ? request_hash(backend_id_, request) : std::string();
  if (cacheable) {
    if (auto hit = cache_get(key)) {
      std::vector<Completion> out;
      for (const auto& c : hit->at("completions")) {
        out.push_back(Completion{c.at("text").get<std::string>(), usage_from(c.at("usage"), request.call_tag)});
      }
      return out;
    }
  }

  std::vector<Completion> out = with_retry([&] { return backend_->complete(request); });
  if (static_cast<int>(out.size()) != request.decoding.sample_count) {
    throw ReplyFormatError("backend returned " + std::to_string(out.size()) + " completions, expected " +
                               std::to_string(request.decoding.sample_count),
                           "");
  }
  Json stored = Json::array();
  for (auto& c : out) {
    c.usage.call_tag = request.call_tag;
    record(request.call_tag, CallKind::Generation, c.usage.input_tokens, c.usage.output_tokens);
    stored.push_back(Json{{"text", c.text}, {"usage", usage_json(c.usage)}});
  }
  if (cacheable) cache_put(key, Json{{"completions", stored}});
  return out;
}

EmbedResult Gateway::embed_ex(const std::vector<std::string>& texts, const std::string& call_tag) {
  if (texts.empty()) throw ContractError("embed needs at least one text");
  const bool cacheable = cache_allowed(call_tag, true);
  const std::string key = cacheable ? hash_of(backend_id_, "embed", Json{{"texts", texts}}) : std::string();
  if (cacheable) {
    if (auto hit = cache_get(key)) {
      EmbedResult r;
      r.vectors = hit->at("vectors").get<std::vector<std::vector<double>>>();
      r.usage = usage_from(hit->at("usage"), call_tag);
      return r;
    }
  }
  EmbedResult r = with_retry([&] { return backend_->embed(texts, call_tag); });
  if (r.vectors.size() != texts.size()) throw ReplyFormatError("embedding count mismatch", "");
  for (const auto& v : r.vectors) {
    if (v.size() != r.vectors.front().size() || v.empty()) throw ReplyFormatError("embedding dimension mismatch", "");
  }
  r.usage.call_tag = call_tag;
  record(call_tag, CallKind::Embedding, r.usage.input_tokens, r.usage.output_tokens);
  if (cacheable) cache_put(key, Json{{"vectors", r.vectors}, {"usage", usage_json(r.usage)}});
  return r;
}

ScoreResult Gateway::score_pair_ex(const std::string& query, const std::string& passage, const std::string& call_tag) {
  if (query.empty() || passage.empty()) throw ContractError("score_pair needs non-empty query and passage");
  const bool cacheable = cache_allowed(call_tag, true);
  const std::string key =
      cacheable ? hash_of(backend_id_, "score", Json{{"query", query}, {"passage", passage}}) : std::string();
  if (cacheable) {
    if (auto hit = cache_get(key)) return ScoreResult{hit->at("score").get<double>(), usage_from(hit->at("usage"), call_tag)};
  }
  ScoreResult r = with_retry([&] { return backend_->score_pair(query, passage, call_tag); });
  if (!std::isfinite(r.score)) throw ReplyFormatError("non-finite relevance score", std::to_string(r.score));
  r.usage.call_tag = call_tag;
  record(call_tag, CallKind::Rerank, r.usage.input_tokens, r.usage.output_tokens);
  if (cacheable) cache_put(key, Json{{"score", r.score}, {"usage", usage_json(r.usage)}});
  return r;
}

NliResult Gateway::nli_classify_ex(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) {
  if (premise.empty() || hypothesis.empty()) throw ContractError("nli_classify needs non-empty premise and hypothesis");
  const bool cacheable = cache_allowed(call_tag, true);
  const std::string key =
      cacheable ? hash_of(backend_id_, "nli", Json{{"premise", premise}, {"hypothesis", hypothesis}}) : std::string();
  if (cacheable) {
    if (auto hit = cache_get(key)) {
      NliResult r;
      r.dist = NliDistribution{hit->at("e").get<double>(), hit->at("n").get<double>(), hit->at("c").get<double>()};
      r.usage = usage_from(hit->at("usage"), call_tag);
      return r;
    }
  }
  NliResult r = with_retry([&] { return backend_->nli(premise, hypothesis, call_tag); });
  r.dist = normalize_nli(r.dist, &r.warnings);
  r.usage.call_tag = call_tag;
  record(call_tag, CallKind::Nli, r.usage.input_tokens, r.usage.output_tokens);
  if (cacheable) {
    cache_put(key, Json{{"e", r.dist.p_entail}, {"n", r.dist.p_neutral}, {"c", r.dist.p_contradict}, {"usage", usage_json(r.usage)}});
  }
  return r;
}

TokenUsage Gateway::usage_report(const std::string& tag_pattern) const {
  TokenUsage total;
  total.call_tag = tag_pattern;
  std::lock_guard<std::mutex> lock(ledger_mu_);
  for (const auto& row : ledger_) {
    if (!text::glob_match(tag_pattern, row.call_tag)) continue;
    total.input_tokens += row.input_tokens;
    total.output_tokens += row.output_tokens;
  }
  return total;
}

std::vector<LedgerRow> Gateway::ledger() const {
  std::lock_guard<std::mutex> lock(ledger_mu_);
  return ledger_;
}

std::int64_t Gateway::backend_calls() const {
  std::lock_guard<std::mutex> lock(ledger_mu_);
  return backend_calls_;
}

// ---- ScopedClient ------------------------------------------------------------

void ScopedClient::record(const TokenUsage& u, CallKind kind, int samples) {
  std::lock_guard<std::mutex> lock(mu_);
  rows_.push_back(u);
  calls_.emplace_back(kind, u.call_tag);
  samples_.push_back(samples);
}

std::vector<Completion> ScopedClient::complete(const CompletionRequest& request) {
  auto out = parent_.complete(request);
  TokenUsage total;
  total.call_tag = request.call_tag;
  for (const auto& c : out) total += c.usage;
  record(total, CallKind::Generation, static_cast<int>(out.size()));
  return out;
}

EmbedResult ScopedClient::embed_ex(const std::vector<std::string>& texts, const std::string& call_tag) {
  auto r = parent_.embed_ex(texts, call_tag);
  record(r.usage, CallKind::Embedding, 0);
  return r;
}

ScoreResult ScopedClient::score_pair_ex(const std::string& query, const std::string& passage, const std::string& call_tag) {
  auto r = parent_.score_pair_ex(query, passage, call_tag);
  record(r.usage, CallKind::Rerank, 0);
  return r;
}

NliResult ScopedClient::nli_classify_ex(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) {
  auto r = parent_.nli_classify_ex(premise, hypothesis, call_tag);
  record(r.usage, CallKind::Nli, 0);
  if (!r.warnings.empty()) {
    std::lock_guard<std::mutex> lock(mu_);
    warnings_.insert(warnings_.end(), r.warnings.begin(), r.warnings.end());
  }
  return r;
}

std::vector<TokenUsage> ScopedClient::usage() const {
  std::lock_guard<std::mutex> lock(mu_);
  return rows_;
}

TokenUsage ScopedClient::usage_report(const std::string& tag_pattern) const {
  TokenUsage total;
  total.call_tag = tag_pattern;
  std::lock_guard<std::mutex> lock(mu_);
  for (const auto& r : rows_) {
    if (text::glob_match(tag_pattern, r.call_tag)) total += r;
  }
  return total;
}

std::int64_t ScopedClient::generation_calls(const std::string& tag_pattern) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::int64_t n = 0;
  for (const auto& [kind, tag] : calls_) {
    if (kind == CallKind::Generation && text::glob_match(tag_pattern, tag)) ++n;
  }
  return n;
}

std::int64_t ScopedClient::generation_samples(const std::string& tag_pattern) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::int64_t n = 0;
  for (std::size_t i = 0; i < calls_.size(); ++i) {
    if (calls_[i].first == CallKind::Generation && text::glob_match(tag_pattern, calls_[i].second)) n += samples_[i];
  }
  return n;
}

std::int64_t ScopedClient::nli_calls(const std::string& tag_pattern) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::int64_t n = 0;
  for (const auto& [kind, tag] : calls_) {
    if (kind == CallKind::Nli && text::glob_match(tag_pattern, tag)) ++n;
  }
  return n;
}

std::vector<std::string> ScopedClient::warnings() const {
  std::lock_guard<std::mutex> lock(mu_);
  return warnings_;
}

// ---- configuration -------------------------------------------------------------

std::string credential_env_name(const std::string& backend_id) {
  std::string id;
  for (char c : backend_id) {
    id.push_back(std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : '_');
  }
  return "BIBAGENT_BACKEND_" + id + "_KEY";
}

namespace {

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

template <typename T>
T typed(const Json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError(path + "." + key, "wrong type");
  }
}

}  // namespace

GatewayConfig load_gateway_config(const Json& config, const std::string& base_dir, const std::string& backend_override) {
  if (!config.is_object()) throw ConfigError("$", "gateway config must be an object");
  GatewayConfig out;
  out.backend_id = backend_override.empty() ? typed<std::string>(config, "backend", "$", "") : backend_override;
  if (out.backend_id.empty()) throw ConfigError("$.backend", "no backend selected");
  if (!config.contains("backends") || !config.at("backends").is_object())
    throw ConfigError("$.backends", "missing backends table");
  const Json& backends = config.at("backends");
  if (!backends.contains(out.backend_id)) throw ConfigError("$.backends." + out.backend_id, "unknown backend id");
  const std::string bpath = "$.backends." + out.backend_id;
  const Json& b = backends.at(out.backend_id);
  const std::string type = typed<std::string>(b, "type", bpath, "");
  if (type == "stub") {
    auto stub = std::make_shared<StubBackend>(out.backend_id, typed<bool>(b, "vision", bpath, true));
    if (b.contains("fixtures")) {
      const std::string dir = resolve_path(typed<std::string>(b, "fixtures", bpath, ""), base_dir);
      if (!fs::is_directory(dir)) throw ConfigError(bpath + ".fixtures", "not a directory: " + dir);
      stub->load_fixture_dir(dir);
    }
    out.backend = stub;
  } else if (type == "http") {
    HttpBackendConfig h;
    h.id = out.backend_id;
    h.base_url = typed<std::string>(b, "base_url", bpath, "");
    if (h.base_url.empty()) throw ConfigError(bpath + ".base_url", "required for http backends");
    h.vision = typed<bool>(b, "vision", bpath, false);
    h.timeout_seconds = typed<int>(b, "timeout_seconds", bpath, 120);
    h.default_model = typed<std::string>(b, "default_model", bpath, "");
    h.embedding_model = typed<std::string>(b, "embedding_model", bpath, "");
    h.rerank_model = typed<std::string>(b, "rerank_model", bpath, "");
    h.nli_model = typed<std::string>(b, "nli_model", bpath, "");
    if (b.contains("tag_models")) {
      if (!b.at("tag_models").is_object()) throw ConfigError(bpath + ".tag_models", "must be an object");
      for (const auto& [pattern, model] : b.at("tag_models").items()) {
        if (!model.is_string()) throw ConfigError(bpath + ".tag_models." + pattern, "model must be a string");
        h.tag_models.emplace_back(pattern, model.get<std::string>());
      }
    }
    if (const char* key = std::getenv(credential_env_name(out.backend_id).c_str())) h.api_key = key;
    out.backend = std::make_shared<HttpBackend>(std::move(h));
  } else {
    throw ConfigError(bpath + ".type", "expected 'stub' or 'http'");
  }

  out.options.max_parallel = typed<int>(config, "max_parallel", "$", 4);
  if (out.options.max_parallel < 1) throw ConfigError("$.max_parallel", "must be >= 1");
  if (config.contains("cache")) {
    const Json& c = config.at("cache");
    if (!c.is_object()) throw ConfigError("$.cache", "must be an object");
    out.options.cache.enabled = typed<bool>(c, "enabled", "$.cache", true);
    out.options.cache.dir = resolve_path(typed<std::string>(c, "dir", "$.cache", ""), base_dir);
    if (c.contains("tags")) {
      if (!c.at("tags").is_object()) throw ConfigError("$.cache.tags", "must be an object");
      for (const auto& [pattern, on] : c.at("tags").items()) {
        if (!on.is_boolean()) throw ConfigError("$.cache.tags." + pattern, "must be a boolean");
        out.options.cache.tag_overrides.emplace_back(pattern, on.get<bool>());
      }
    }
  }
  return out;
}

}  // namespace citecheck
