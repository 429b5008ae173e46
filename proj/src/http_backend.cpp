#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <fstream>
#include <regex>
#include <sstream>

#include "citecheck/errors.hpp"
#include "citecheck/gateway.hpp"
#include "citecheck/text.hpp"

namespace citecheck {

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, kUrl)) throw ConfigError("base_url", "not an http(s) URL: " + config_.base_url);
  scheme_host_port_ = m[1].str();
  path_prefix_ = m[2].matched ? m[2].str() : "";
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpBackend::model_for(const std::string& tag) const {
  for (const auto& [pattern, model] : config_.tag_models) {
    if (text::glob_match(pattern, tag)) return model;
  }
  return config_.default_model;
}

Json HttpBackend::post(const std::string& path, const Json& body) {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(config_.timeout_seconds, 0);
  cli.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = cli.Post(path_prefix_ + path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("request to " + scheme_host_port_ + path + " failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("HTTP " + std::to_string(res->status) + " from " + path);
  }
  if (res->status != 200) throw ReplyFormatError("HTTP " + std::to_string(res->status) + " from " + path, res->body);
  try {
    return Json::parse(res->body);
  } catch (const Json::exception&) {
    throw ReplyFormatError("reply is not JSON", res->body);
  }
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot read image part " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::int64_t usage_field(const Json& reply, const char* field, std::int64_t fallback) {
  if (reply.contains("usage") && reply.at("usage").contains(field)) return reply.at("usage").at(field).get<std::int64_t>();
  return fallback;
}

}  // namespace

std::vector<Completion> HttpBackend::complete(const CompletionRequest& req) {
  Json user;
  if (req.image_parts.empty()) {
    user = req.user_text;
  } else {
    user = Json::array();
    if (!req.user_text.empty()) user.push_back(Json{{"type", "text"}, {"text", req.user_text}});
    for (const auto& img : req.image_parts) {
      const std::string url = "data:" + img.mime + ";base64," + text::base64_encode(read_file(img.path));
      user.push_back(Json{{"type", "image_url"}, {"image_url", Json{{"url", url}}}});
    }
  }
  Json messages = Json::array();
  if (!req.system_text.empty()) messages.push_back(Json{{"role", "system"}, {"content", req.system_text}});
  messages.push_back(Json{{"role", "user"}, {"content", user}});

  std::vector<Completion> out;
  for (int i = 0; i < req.decoding.sample_count; ++i) {
    Json body{{"model", model_for(req.call_tag)},
              {"messages", messages},
              {"temperature", req.decoding.temperature},
              {"top_p", req.decoding.top_p},
              {"seed", req.decoding.seed + i},
              {"n", 1}};
    const Json reply = post("/v1/chat/completions", body);
    Completion c;
    try {
      c.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception&) {
      throw ReplyFormatError("chat reply without choices[0].message.content", reply.dump());
    }
    const auto in_fallback = static_cast<std::int64_t>(text::whitespace_token_count(req.system_text + " " + req.user_text));
    const auto out_fallback = static_cast<std::int64_t>(text::whitespace_token_count(c.text));
    c.usage.input_tokens = usage_field(reply, "prompt_tokens", in_fallback);
    c.usage.output_tokens = usage_field(reply, "completion_tokens", out_fallback);
    c.usage.call_tag = req.call_tag;
    out.push_back(std::move(c));
  }
  return out;
}

EmbedResult HttpBackend::embed(const std::vector<std::string>& texts, const std::string& call_tag) {
  const Json reply = post("/v1/embeddings", Json{{"model", config_.embedding_model}, {"input", texts}});
  EmbedResult r;
  try {
    for (const auto& d : reply.at("data")) r.vectors.push_back(d.at("embedding").get<std::vector<double>>());
  } catch (const Json::exception&) {
    throw ReplyFormatError("embedding reply without data[].embedding", reply.dump());
  }
  std::int64_t fallback = 0;
  for (const auto& t : texts) fallback += static_cast<std::int64_t>(text::whitespace_token_count(t));
  r.usage.input_tokens = usage_field(reply, "prompt_tokens", fallback);
  r.usage.call_tag = call_tag;
  return r;
}

ScoreResult HttpBackend::score_pair(const std::string& query, const std::string& passage, const std::string& call_tag) {
  const Json reply = post("/rerank", Json{{"model", config_.rerank_model}, {"query", query}, {"texts", Json::array({passage})}});
  ScoreResult r;
  try {
    r.score = reply.at(0).at("score").get<double>();
  } catch (const Json::exception&) {
    throw ReplyFormatError("rerank reply without [0].score", reply.dump());
  }
  r.usage.input_tokens = static_cast<std::int64_t>(text::whitespace_token_count(query) + text::whitespace_token_count(passage));
  r.usage.call_tag = call_tag;
  return r;
}

NliResult HttpBackend::nli(const std::string& premise, const std::string& hypothesis, const std::string& call_tag) {
  const Json reply = post("/nli", Json{{"model", config_.nli_model}, {"premise", premise}, {"hypothesis", hypothesis}});
  NliResult r;
  try {
    r.dist.p_entail = reply.at("entailment").get<double>();
    r.dist.p_neutral = reply.at("neutral").get<double>();
    r.dist.p_contradict = reply.at("contradiction").get<double>();
  } catch (const Json::exception&) {
    throw ReplyFormatError("nli reply without entailment/neutral/contradiction", reply.dump());
  }
  r.usage.input_tokens =
      static_cast<std::int64_t>(text::whitespace_token_count(premise) + text::whitespace_token_count(hypothesis));
  r.usage.call_tag = call_tag;
  return r;
}

}  // namespace citecheck
