#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "citecheck/concurrency.hpp"
#include "citecheck/core.hpp"

namespace citecheck {

struct DecodingConfig {
  double temperature = 0.0;
  double top_p = 1.0;  // nucleus mass
  int sample_count = 1;
  std::int64_t seed = 0;

  void validate() const;
  static DecodingConfig deterministic(std::int64_t seed = 0) { return {0.0, 1.0, 1, seed}; }
  static DecodingConfig self_consistency(int samples, double temperature, std::int64_t seed) {
    return {temperature, 0.95, samples, seed};
  }
};

struct ImagePart {
  std::string path;
  std::string mime = "image/png";
};

struct CompletionRequest {
  std::string system_text;
  std::string user_text;
  std::vector<ImagePart> image_parts;
  DecodingConfig decoding;
  std::string call_tag;
  std::string fixture_id;  // stub backends only; part of the cache key
  bool bypass_cache = false;
};

struct Completion {
  std::string text;
  TokenUsage usage;
};

struct NliDistribution {
  double p_entail = 0.0;
  double p_neutral = 1.0;
  double p_contradict = 0.0;
};

enum class CallKind { Generation, Embedding, Rerank, Nli };
std::string to_string(CallKind kind);

struct LedgerRow {
  std::string call_tag;
  CallKind kind = CallKind::Generation;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
};

struct EmbedResult {
  std::vector<std::vector<double>> vectors;
  TokenUsage usage;
};
struct ScoreResult {
  double score = 0.0;
  TokenUsage usage;
};
struct NliResult {
  NliDistribution dist;
  TokenUsage usage;
  std::vector<std::string> warnings;
};

// Capability surface shared by the gateway and its per-task views.
class ModelClient {
 public:
  virtual ~ModelClient() = default;

  // Exactly decoding.sample_count completions.
  virtual std::vector<Completion> complete(const CompletionRequest& request) = 0;
  virtual EmbedResult embed_ex(const std::vector<std::string>& texts, const std::string& call_tag) = 0;
  virtual ScoreResult score_pair_ex(const std::string& query, const std::string& passage, const std::string& call_tag) = 0;
  virtual NliResult nli_classify_ex(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) = 0;
  virtual int max_parallel() const = 0;

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, const std::string& call_tag = "embed") {
    return embed_ex(texts, call_tag).vectors;
  }
  double score_pair(const std::string& query, const std::string& passage, const std::string& call_tag = "rerank") {
    return score_pair_ex(query, passage, call_tag).score;
  }
  NliDistribution nli_classify(const std::string& premise, const std::string& hypothesis, const std::string& call_tag = "nli") {
    return nli_classify_ex(premise, hypothesis, call_tag).dist;
  }
};

// A provider. Implementations report their own token counts and may return an
// unnormalized NLI distribution; the gateway validates it.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual bool supports_vision() const = 0;
  virtual std::vector<Completion> complete(const CompletionRequest& request) = 0;
  virtual EmbedResult embed(const std::vector<std::string>& texts, const std::string& call_tag) = 0;
  virtual ScoreResult score_pair(const std::string& query, const std::string& passage, const std::string& call_tag) = 0;
  virtual NliResult nli(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) = 0;
};

struct CachePolicy {
  bool enabled = true;
  std::string dir;  // empty: memory only
  // Glob on call_tag -> force cache on/off. First matching pattern wins.
  std::vector<std::pair<std::string, bool>> tag_overrides;
};

struct GatewayOptions {
  int max_parallel = 4;
  int max_attempts = 3;
  std::chrono::milliseconds backoff{20};
  CachePolicy cache;
};

// Validates an NLI distribution: sums within 1e-3 of 1 are renormalized with a
// warning; anything further off throws ReplyFormatError.
NliDistribution normalize_nli(NliDistribution d, std::vector<std::string>* warnings);

// Content hash of (backend id, full request). The seed is part of the payload.
std::string request_hash(const std::string& backend_id, const CompletionRequest& request);

class Gateway : public ModelClient {
 public:
  Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});

  std::vector<Completion> complete(const CompletionRequest& request) override;
  EmbedResult embed_ex(const std::vector<std::string>& texts, const std::string& call_tag) override;
  ScoreResult score_pair_ex(const std::string& query, const std::string& passage, const std::string& call_tag) override;
  NliResult nli_classify_ex(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) override;
  int max_parallel() const override { return options_.max_parallel; }

  // Exact integer sums over ledger rows whose tag matches the glob.
  TokenUsage usage_report(const std::string& tag_pattern = "*") const;
  std::vector<LedgerRow> ledger() const;
  // Backend invocations, counting retries once per logical call.
  std::int64_t backend_calls() const;
  const std::string& backend_id() const { return backend_id_; }
  bool supports_vision() const { return backend_->supports_vision(); }

 private:
  bool cache_allowed(const std::string& tag, bool deterministic) const;
  std::optional<Json> cache_get(const std::string& key);
  void cache_put(const std::string& key, const Json& payload);
  void record(const std::string& tag, CallKind kind, std::int64_t in, std::int64_t out);
  template <typename Fn>
  auto with_retry(Fn&& fn) -> decltype(fn());

  std::shared_ptr<Backend> backend_;
  std::string backend_id_;
  GatewayOptions options_;
  Semaphore in_flight_;

  mutable std::mutex ledger_mu_;
  std::vector<LedgerRow> ledger_;
  std::int64_t backend_calls_ = 0;

  std::mutex cache_mu_;
  std::unordered_map<std::string, Json> cache_;
};

// Per-task view over a client. Records the usage of every call it forwards,
// cache hits included, so a citation's accounting does not depend on whether
// another citation warmed the cache first.
class ScopedClient : public ModelClient {
 public:
  explicit ScopedClient(ModelClient& parent) : parent_(parent) {}

  std::vector<Completion> complete(const CompletionRequest& request) override;
  EmbedResult embed_ex(const std::vector<std::string>& texts, const std::string& call_tag) override;
  ScoreResult score_pair_ex(const std::string& query, const std::string& passage, const std::string& call_tag) override;
  NliResult nli_classify_ex(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) override;
  int max_parallel() const override { return parent_.max_parallel(); }

  std::vector<TokenUsage> usage() const;
  TokenUsage usage_report(const std::string& tag_pattern = "*") const;
  // Number of forwarded generation requests and samples matching the glob.
  std::int64_t generation_calls(const std::string& tag_pattern = "*") const;
  std::int64_t generation_samples(const std::string& tag_pattern = "*") const;
  std::int64_t nli_calls(const std::string& tag_pattern = "*") const;
  std::vector<std::string> warnings() const;

 private:
  void record(const TokenUsage& u, CallKind kind, int samples);

  ModelClient& parent_;
  mutable std::mutex mu_;
  std::vector<TokenUsage> rows_;
  std::vector<std::pair<CallKind, std::string>> calls_;
  std::vector<int> samples_;
  std::vector<std::string> warnings_;
};

// ---- backends --------------------------------------------------------------

// Deterministic offline backend driven by a directory of JSON fixture files.
//
// Completion rules (first match wins, files in filename order):
//   {"id": "...", "tag": "glob", "contains": ["..."], "images": "glob",
//    "replies": ["...", ...],
//    "echo_between": ["start", "end"], "strip_markers": true, "first_sentence": true}
// Sample i of a request with seed s returns replies[(s + i) % n] when T > 0 and
// replies[s % n] for every sample when T = 0. `echo_between` replies with the
// request text between the two markers (trimmed). Requests with a fixture id
// only match the rule with that id. {"by_hash": {"<request_hash>": "reply"}}
// is consulted before rules.
//
// NLI rules: {"premise_contains": "...", "hypothesis_contains": "...",
//   "entail": e, "neutral": n, "contradict": c}. Without a rule, a premise
// carrying directives such as "entail:0.95" or "contradict:0.93" yields those
// probabilities (neutral takes the rest); identical texts yield
// (0.95, 0.04, 0.01); otherwise entail = 0.5 * max(0, cosine), contradict = 0.05.
//
// Score rules: {"query_contains", "passage_contains", "score"}; default is the
// cosine of the hashed embeddings.
//
// Embeddings: signed feature hashing of character trigrams (FNV-1a) into 256
// dimensions, L2-normalized. Token counts are whitespace tokens.
class StubBackend : public Backend {
 public:
  static constexpr int kEmbeddingDim = 256;

  explicit StubBackend(std::string id = "stub", bool vision = true);
  // Loads every *.json file in `dir` in filename order.
  void load_fixture_dir(const std::string& dir);
  void add_fixtures(const Json& fixture_file);

  std::string id() const override { return id_; }
  bool supports_vision() const override { return vision_; }
  std::vector<Completion> complete(const CompletionRequest& request) override;
  EmbedResult embed(const std::vector<std::string>& texts, const std::string& call_tag) override;
  ScoreResult score_pair(const std::string& query, const std::string& passage, const std::string& call_tag) override;
  NliResult nli(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) override;

  // Test hook: throw TransportError on the next `n` calls.
  void fail_next(int n);

  static std::vector<double> hash_embedding(const std::string& text);

 private:
  void maybe_fail();

  std::string id_;
  bool vision_;
  std::vector<Json> completion_rules_;
  std::vector<Json> nli_rules_;
  std::vector<Json> score_rules_;
  std::map<std::string, Json> by_hash_;
  std::mutex fail_mu_;
  int fail_remaining_ = 0;
};

// OpenAI-compatible HTTP provider.
//   generation: POST {base}/v1/chat/completions (one request per sample, seed + i)
//   embeddings: POST {base}/v1/embeddings
//   rerank:     POST {base}/rerank  {"query", "texts"} -> [{"index","score"}]
//   nli:        POST {base}/nli     {"premise","hypothesis"} -> {"entailment","neutral","contradiction"}
// Models are chosen per call tag from `tag_models` (glob -> model), falling
// back to `default_model`.
struct HttpBackendConfig {
  std::string id = "http";
  std::string base_url;
  std::string api_key;
  bool vision = false;
  int timeout_seconds = 120;
  std::string default_model;
  std::string embedding_model;
  std::string rerank_model;
  std::string nli_model;
  std::vector<std::pair<std::string, std::string>> tag_models;
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  std::string id() const override { return config_.id; }
  bool supports_vision() const override { return config_.vision; }
  std::vector<Completion> complete(const CompletionRequest& request) override;
  EmbedResult embed(const std::vector<std::string>& texts, const std::string& call_tag) override;
  ScoreResult score_pair(const std::string& query, const std::string& passage, const std::string& call_tag) override;
  NliResult nli(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) override;

 private:
  Json post(const std::string& path, const Json& body);
  std::string model_for(const std::string& tag) const;

  HttpBackendConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// ---- configuration ---------------------------------------------------------

// {"backend": "<id>",
//  "backends": {"<id>": {"type": "stub", "fixtures": "dir", "vision": true} |
//                       {"type": "http", "base_url": ..., "models": {...}}},
//  "max_parallel": 4,
//  "cache": {"enabled": true, "dir": "...", "tags": {"glob": bool}}}
// Relative paths resolve against `base_dir`. Credentials come from the
// environment variable BIBAGENT_BACKEND_<ID>_KEY.
struct GatewayConfig {
  std::string backend_id;
  std::shared_ptr<Backend> backend;
  GatewayOptions options;
};

GatewayConfig load_gateway_config(const Json& config, const std::string& base_dir,
                                  const std::string& backend_override = "");
std::string credential_env_name(const std::string& backend_id);

}  // namespace citecheck
