#include "citecheck/acsv.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <regex>

#include "citecheck/errors.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::acsv {

void FunnelConfig::validate() const {
  if (top_k < 1) throw ConfigError("funnel.top_k", "must be >= 1");
  if (focus_n < 1 || focus_n > top_k) throw ConfigError("funnel.focus_n", "must satisfy 1 <= focus_n <= top_k");
  if (window_size < 1) throw ConfigError("funnel.window_size", "must be >= 1");
  if (!(tau_high > 0.0 && tau_high < 1.0)) throw ConfigError("funnel.tau_high", "must lie in (0, 1)");
  if (sc_samples < 1) throw ConfigError("funnel.sc_samples", "must be >= 1");
  if (!(sc_temperature >= 0.0)) throw ConfigError("funnel.sc_temperature", "must be >= 0");
  if (!(safety_threshold > 0.0 && safety_threshold <= 1.0))
    throw ConfigError("funnel.safety_threshold", "must lie in (0, 1]");
}

FunnelConfig funnel_config_from_json(const Json& j, FunnelConfig c) {
  if (!j.is_object()) throw ConfigError("funnel", "must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "top_k") c.top_k = it->get<int>();
      else if (k == "focus_n") c.focus_n = it->get<int>();
      else if (k == "window_size") c.window_size = it->get<int>();
      else if (k == "tau_high") c.tau_high = it->get<double>();
      else if (k == "sc_samples") c.sc_samples = it->get<int>();
      else if (k == "sc_temperature") c.sc_temperature = it->get<double>();
      else if (k == "safety_threshold") c.safety_threshold = it->get<double>();
      else throw ConfigError("funnel." + k, "unknown field");
    } catch (const Json::exception&) {
      throw ConfigError("funnel." + k, "wrong type");
    }
  }
  c.validate();
  return c;
}

Json to_json(const FunnelConfig& c) {
  return Json{{"top_k", c.top_k},           {"focus_n", c.focus_n},
              {"window_size", c.window_size}, {"tau_high", c.tau_high},
              {"sc_samples", c.sc_samples},   {"sc_temperature", c.sc_temperature},
              {"safety_threshold", c.safety_threshold}};
}

std::string Paragraph::text() const { return text::join(sentences, " "); }

std::vector<Paragraph> paragraphs_of(const ParsedDocument& doc) {
  std::vector<Paragraph> out;
  for (const auto& s : doc.sentences) {
    if (s.block >= doc.blocks.size() || doc.blocks[s.block].kind == BlockKind::Heading) continue;
    if (out.empty() || out.back().id != s.block) {
      out.push_back(Paragraph{s.block, {}});
    }
    out.back().sentences.push_back(s.text);
  }
  return out;
}

std::vector<RankedParagraph> retrieve_candidates(const std::string& citing_sentence, const ParsedDocument& cited_doc,
                                                 ModelClient& client, const FunnelConfig& config) {
  const std::vector<Paragraph> paras = paragraphs_of(cited_doc);
  if (paras.empty()) throw ContractError("retrieve_candidates: cited document has no paragraphs");
  std::vector<std::string> texts;
  texts.reserve(paras.size() + 1);
  texts.push_back(citing_sentence);
  for (const auto& p : paras) texts.push_back(p.text());
  const auto vecs = client.embed(texts, "acsv/embed");
  if (vecs.size() != texts.size()) throw ReplyFormatError("embedding count mismatch", "");
  std::vector<RankedParagraph> ranked;
  ranked.reserve(paras.size());
  for (std::size_t i = 0; i < paras.size(); ++i) ranked.push_back({paras[i], text::cosine(vecs[0], vecs[i + 1])});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedParagraph& a, const RankedParagraph& b) { return a.score > b.score; });
  ranked.resize(std::min(ranked.size(), static_cast<std::size_t>(config.top_k)));
  return ranked;
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t w) {
  if (n <= w) return {0};
  std::vector<std::size_t> s(n - w + 1);
  std::iota(s.begin(), s.end(), std::size_t{0});
  return s;
}

std::vector<EvidenceWindow> rerank_and_window(const std::string& citing_sentence,
                                              const std::vector<RankedParagraph>& candidates, ModelClient& client,
                                              const FunnelConfig& config) {
  if (candidates.empty()) throw ContractError("rerank_and_window: no candidates");
  const auto scores = parallel_map(candidates.size(), client.max_parallel(), [&](std::size_t i) {
    return client.score_pair(citing_sentence, candidates[i].paragraph.text(), "acsv/rerank");
  });
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(order.size(), static_cast<std::size_t>(config.focus_n)));

  const auto w = static_cast<std::size_t>(config.window_size);
  std::vector<EvidenceWindow> out;
  for (std::size_t idx : order) {
    const Paragraph& p = candidates[idx].paragraph;
    for (std::size_t start : window_starts(p.sentences.size(), w)) {
      EvidenceWindow win;
      const std::size_t len = std::min(w, p.sentences.size() - start);
      std::vector<std::string> part(p.sentences.begin() + static_cast<std::ptrdiff_t>(start),
                                    p.sentences.begin() + static_cast<std::ptrdiff_t>(start + len));
      win.text = text::join(part, " ");
      win.paragraph = p.id;
      win.first_sentence = start;
      win.sentence_count = len;
      win.retrieval_score = candidates[idx].score;
      win.rerank_score = scores[idx];
      out.push_back(std::move(win));
    }
  }
  return out;
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Retrieval: return "Retrieval";
    case Phase::Rerank: return "Rerank";
    case Phase::NliEarlyExit: return "NliEarlyExit";
    case Phase::Expanded: return "Expanded";
    case Phase::LrmAdjudicated: return "LrmAdjudicated";
  }
  return "Retrieval";
}

Json to_json(const FunnelTrace& t) {
  Json j{{"phase_reached", to_string(t.phase_reached)},
         {"m_entail", t.m_entail},
         {"m_contradict", t.m_contradict},
         {"confidence", t.confidence},
         {"conflict", t.conflict},
         {"expanded", t.expanded},
         {"nli_calls", t.nli_calls},
         {"window_count", t.window_count}};
  if (t.lrm_votes) {
    j["lrm_votes"] = Json{{"Supported", t.lrm_votes->supported},
                          {"Miscitation", t.lrm_votes->miscitation},
                          {"Undecidable", t.lrm_votes->undecidable},
                          {"unparseable", t.lrm_votes->unparseable}};
  } else {
    j["lrm_votes"] = nullptr;
  }
  return j;
}

std::string expand_hypothesis(const std::string& prev, const std::string& cite, const std::string& next) {
  std::vector<std::string> parts;
  for (const auto* s : {&prev, &cite, &next}) {
    const std::string t = text::trim(*s);
    if (!t.empty()) parts.push_back(t);
  }
  return text::join(parts, " ");
}

namespace {

struct PassResult {
  double m_entail = 0.0;
  double m_contradict = 0.0;
};

PassResult run_pass(std::vector<EvidenceWindow>& windows, const std::string& hypothesis, ModelClient& client) {
  const auto dists = parallel_map(windows.size(), client.max_parallel(), [&](std::size_t i) {
    return client.nli_classify(windows[i].text, hypothesis, "acsv/nli");
  });
  PassResult r;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    windows[i].nli = dists[i];
    r.m_entail = std::max(r.m_entail, dists[i].p_entail);
    r.m_contradict = std::max(r.m_contradict, dists[i].p_contradict);
  }
  return r;
}

// Early-exit rule. When both signals clear the threshold the larger one wins
// and `conflict` is set; an exact tie falls through to expansion.
std::optional<VerdictLabel> decide(const PassResult& p, double tau, bool& conflict, double& confidence) {
  const bool e = p.m_entail > tau;
  const bool c = p.m_contradict > tau;
  if (e && c) {
    conflict = true;
    if (p.m_entail == p.m_contradict) return std::nullopt;
  }
  if (e && (!c || p.m_entail > p.m_contradict)) {
    confidence = p.m_entail;
    return VerdictLabel::Supported;
  }
  if (c) {
    confidence = p.m_contradict;
    return VerdictLabel::Miscitation;
  }
  return std::nullopt;
}

}  // namespace

GateOutcome nli_gate(std::vector<EvidenceWindow>& windows, const std::string& citing_sentence, const std::string& prev,
                     const std::string& next, ModelClient& client, const FunnelConfig& config) {
  if (windows.empty()) throw ContractError("nli_gate: no windows");
  GateOutcome out;
  out.trace.window_count = windows.size();
  out.trace.phase_reached = Phase::Rerank;

  PassResult first = run_pass(windows, citing_sentence, client);
  out.trace.nli_calls += static_cast<int>(windows.size());
  out.trace.m_entail = first.m_entail;
  out.trace.m_contradict = first.m_contradict;
  double conf = 0.0;
  if (auto label = decide(first, config.tau_high, out.trace.conflict, conf)) {
    out.early_exit = true;
    out.label = *label;
    out.trace.phase_reached = Phase::NliEarlyExit;
    out.trace.confidence = conf;
    return out;
  }

  out.expanded_hypothesis = expand_hypothesis(prev, citing_sentence, next);
  out.trace.expanded = true;
  PassResult second = run_pass(windows, out.expanded_hypothesis, client);
  out.trace.nli_calls += static_cast<int>(windows.size());
  out.trace.m_entail = second.m_entail;
  out.trace.m_contradict = second.m_contradict;
  out.trace.phase_reached = Phase::Expanded;
  bool conflict2 = false;
  if (auto label = decide(second, config.tau_high, conflict2, conf)) {
    out.trace.conflict = out.trace.conflict || conflict2;
    out.early_exit = true;
    out.label = *label;
    out.trace.confidence = conf;
    return out;
  }
  out.trace.conflict = out.trace.conflict || conflict2;
  return out;
}

std::optional<VerdictLabel> parse_lrm_verdict(const std::string& reply) {
  static const std::regex kLine(R"(^\s*(?:\*\*)?\s*(?:final\s+)?(?:verdict\s*:\s*)?(?:\*\*)?\s*([A-Za-z]+)\s*(?:\*\*)?\s*\.?\s*$)",
                                std::regex::icase);
  std::optional<VerdictLabel> found;
  for (const auto& raw : text::split(reply, '\n')) {
    std::smatch m;
    const std::string line = text::trim(raw);
    if (!std::regex_match(line, m, kLine)) continue;
    if (auto v = parse_verdict_label(m[1].str())) found = v;
  }
  return found;
}

Adjudication tally_votes(const std::vector<std::optional<VerdictLabel>>& votes, double safety_threshold) {
  Adjudication a;
  for (const auto& v : votes) {
    if (!v) {
      ++a.votes.unparseable;
      ++a.votes.undecidable;
    } else if (*v == VerdictLabel::Supported) {
      ++a.votes.supported;
    } else if (*v == VerdictLabel::Miscitation) {
      ++a.votes.miscitation;
    } else {
      ++a.votes.undecidable;
    }
  }
  if (votes.empty() || a.votes.unparseable == static_cast<int>(votes.size())) {
    a.label = VerdictLabel::Undecidable;
    a.confidence = 0.0;
    return a;
  }
  const std::array<std::pair<VerdictLabel, int>, 3> counts = {{{VerdictLabel::Supported, a.votes.supported},
                                                               {VerdictLabel::Miscitation, a.votes.miscitation},
                                                               {VerdictLabel::Undecidable, a.votes.undecidable}}};
  int best = -1;
  int second = -1;
  VerdictLabel label = VerdictLabel::Undecidable;
  for (const auto& [l, n] : counts) {
    if (n > best) {
      second = best;
      best = n;
      label = l;
    } else if (n > second) {
      second = n;
    }
  }
  a.confidence = static_cast<double>(best) / static_cast<double>(votes.size());
  if (best == second) {
    a.label = VerdictLabel::Undecidable;
    return a;
  }
  a.label = label;
  if (a.confidence < safety_threshold) {
    a.below_safety = true;
    a.label = VerdictLabel::Undecidable;
  }
  return a;
}

Adjudication adjudicate_deep(const std::string& expanded_hypothesis, const std::vector<std::string>& focus_passages,
                             ModelClient& client, const FunnelConfig& config, std::int64_t seed) {
  std::string passages;
  for (std::size_t i = 0; i < focus_passages.size(); ++i) {
    if (i) passages += "\n\n";
    passages += "[P" + std::to_string(i + 1) + "] " + focus_passages[i];
  }
  CompletionRequest req;
  req.system_text = std::string(prompts::lrm_system);
  req.user_text = text::fill_template(prompts::lrm_user, {{"S_EXPANDED", expanded_hypothesis}, {"PASSAGES", passages}});
  req.decoding = DecodingConfig::self_consistency(config.sc_samples, config.sc_temperature, seed);
  req.call_tag = "acsv/lrm";
  const auto replies = client.complete(req);
  std::vector<std::optional<VerdictLabel>> votes;
  votes.reserve(replies.size());
  for (const auto& r : replies) votes.push_back(parse_lrm_verdict(r.text));
  return tally_votes(votes, config.safety_threshold);
}

std::vector<WindowEvidence> to_window_evidence(const std::vector<EvidenceWindow>& windows) {
  std::vector<WindowEvidence> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    WindowEvidence e;
    e.text = w.text;
    e.paragraph = w.paragraph;
    e.retrieval_score = w.retrieval_score;
    e.rerank_score = w.rerank_score;
    e.p_entail = w.nli.p_entail;
    e.p_neutral = w.nli.p_neutral;
    e.p_contradict = w.nli.p_contradict;
    out.push_back(e);
  }
  return out;
}

VerificationResult verify_accessible(const CitationEdge& edge, const std::string& target_key,
                                     const ParsedDocument& cited_doc, const ParsedDocument& citing_doc,
                                     ModelClient& client, const FunnelConfig& config, std::int64_t seed) {
  config.validate();
  VerificationResult r;
  r.occurrence_id = edge.occurrence_id;
  r.target_key = target_key;
  if (edge.sentence_index >= citing_doc.sentences.size())
    throw ContractError("verify_accessible: edge sentence outside the citing document");
  const auto& sents = citing_doc.sentences;
  const std::string cite = text::trim(text::strip_citation_markers(sents[edge.sentence_index].text));
  const std::string prev =
      edge.sentence_index > 0 ? text::strip_citation_markers(sents[edge.sentence_index - 1].text) : std::string();
  const std::string next = edge.sentence_index + 1 < sents.size()
                               ? text::strip_citation_markers(sents[edge.sentence_index + 1].text)
                               : std::string();
  r.evidence.citing_context = cite;

  const auto candidates = retrieve_candidates(cite, cited_doc, client, config);
  r.stage_log.push_back("retrieval: " + std::to_string(candidates.size()) + " paragraphs");
  auto windows = rerank_and_window(cite, candidates, client, config);
  r.stage_log.push_back("rerank: " + std::to_string(windows.size()) + " windows");

  GateOutcome gate = nli_gate(windows, cite, prev, next, client, config);
  FunnelTrace trace = gate.trace;
  r.evidence.accessible_evidence = to_window_evidence(windows);
  if (gate.early_exit) {
    r.stage_log.push_back(std::string("nli: early exit ") + to_string(gate.label) +
                          (trace.expanded ? " after expansion" : ""));
    if (trace.conflict) r.stage_log.push_back("nli: entailment and contradiction both above tau_high");
    r.verdict = Verdict::make(gate.label, trace.confidence, Route::Accessible);
    r.trace = to_json(trace);
    return r;
  }
  r.evidence.citing_context = gate.expanded_hypothesis;
  r.stage_log.push_back("nli: ambiguous after expansion");

  std::vector<std::string> focus;
  // Focus passages are the distinct paragraphs behind the windows, in window order.
  std::vector<std::size_t> seen;
  for (const auto& w : windows) {
    if (std::find(seen.begin(), seen.end(), w.paragraph) != seen.end()) continue;
    seen.push_back(w.paragraph);
    for (const auto& c : candidates) {
      if (c.paragraph.id == w.paragraph) focus.push_back(c.paragraph.text());
    }
  }
  const Adjudication adj = adjudicate_deep(gate.expanded_hypothesis, focus, client, config, seed);
  trace.phase_reached = Phase::LrmAdjudicated;
  trace.lrm_votes = adj.votes;
  trace.confidence = adj.confidence;
  r.stage_log.push_back("lrm: " + to_string(adj.label) + " at " + std::to_string(adj.confidence));
  if (adj.below_safety) {
    r.evidence.notes = "self-consistency below the safety threshold; evidence windows surfaced for review";
  }
  r.verdict = Verdict::make(adj.label, adj.confidence, Route::Accessible);
  r.trace = to_json(trace);
  return r;
}

}  // namespace citecheck::acsv
