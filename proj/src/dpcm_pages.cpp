#include <algorithm>
#include <regex>
#include <set>

#include "citecheck/dpcm.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::dpcm {

std::string to_string(BoundaryAction a) {
  switch (a) {
    case BoundaryAction::None: return "none";
    case BoundaryAction::Hyphen: return "hyphen";
    case BoundaryAction::Continuation: return "continuation";
    case BoundaryAction::LlmRepair: return "llm_repair";
    case BoundaryAction::LlmRejected: return "llm_rejected";
    case BoundaryAction::LlmMalformed: return "llm_malformed";
  }
  return "none";
}

int MergeResult::page_at(std::size_t offset) const {
  int page = page_starts.empty() ? 0 : page_starts.front().second;
  for (const auto& [start, p] : page_starts) {
    if (start <= offset) page = p;
  }
  return page;
}

std::vector<PageTranscript> transcribe_pages(const std::vector<ImagePart>& pages, ModelClient& client, std::int64_t seed,
                                             const std::string& call_tag) {
  if (pages.empty()) throw ContractError("transcribe_pages: empty page list");
  return parallel_map(pages.size(), client.max_parallel(), [&](std::size_t i) {
    CompletionRequest req;
    req.user_text = std::string(prompts::transcription);
    req.image_parts = {pages[i]};
    req.decoding = DecodingConfig::deterministic(seed);
    req.call_tag = call_tag;
    const auto out = client.complete(req);
    PageTranscript t;
    t.page_index = static_cast<int>(i) + 1;
    std::string md = text::trim(text::strip_code_fence(out.at(0).text));
    if (text::to_lower(md) == "null") md.clear();
    t.markdown = md;
    return t;
  });
}

namespace {

std::string last_paragraph(const std::string& s) {
  const std::string t = text::trim(s);
  const auto p = t.rfind("\n\n");
  return p == std::string::npos ? t : text::trim(t.substr(p + 2));
}

std::string first_paragraph(const std::string& s) {
  const std::string t = text::trim(s);
  const auto p = t.find("\n\n");
  return p == std::string::npos ? t : text::trim(t.substr(0, p));
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

const std::set<std::string>& connectives() {
  static const std::set<std::string> k = {"and", "or", "but", "nor", "which", "that", "whereas", "while", "because",
                                          "although", "though", "since", "hence", "thus", "therefore", "whose",
                                          "where", "when", "with", "without", "of", "for", "to", "in", "on", "by",
                                          "as", "than", "then", "from", "into", "via", "i.e.", "e.g.", "respectively"};
  return k;
}

std::string strip_debug_tags(const std::string& s) {
  static const std::regex kTag(R"(<INCOMPLETE_(?:START|END)_P\d+>\n?)");
  return std::regex_replace(s, kTag, "");
}

}  // namespace

bool tail_is_complete(const std::string& paragraph) {
  const std::string t = text::trim(paragraph);
  if (t.empty()) return true;
  if (starts_with(t, "#")) return true;
  static const std::regex kCaption(R"(^\**(?:Figure|Fig\.|Table|Tab\.)\s*\d+)");
  if (std::regex_search(t, kCaption)) return true;
  if (ends_with(t, "$$") || ends_with(t, "\\]") || ends_with(t, "|")) return true;
  static const std::regex kCiteEnd(R"((?:\[[\d,\s–—-]+\]|\([^()]*(?:19|20)\d{2}[a-z]?\))\s*$)");
  if (std::regex_search(t, kCiteEnd)) return true;
  // Sentence-final punctuation, possibly followed by closing quotes, brackets, or emphasis.
  std::size_t i = t.size();
  while (i > 0) {
    const char c = t[i - 1];
    if (c == ')' || c == ']' || c == '"' || c == '\'' || c == '*' || c == '_') {
      --i;
      continue;
    }
    // Closing typographic quote U+201D / U+2019.
    if (i >= 3 && (t.compare(i - 3, 3, "”") == 0 || t.compare(i - 3, 3, "’") == 0)) {
      i -= 3;
      continue;
    }
    break;
  }
  if (i == 0) return false;
  const char c = t[i - 1];
  if (c == '.' || c == '!' || c == '?') return true;
  if (i >= 3 && (t.compare(i - 3, 3, "。") == 0 || t.compare(i - 3, 3, "！") == 0 || t.compare(i - 3, 3, "？") == 0)) {
    return true;
  }
  // Inline math closing the paragraph.
  if (c == '$') return true;
  return false;
}

bool head_is_continuation(const std::string& paragraph) {
  const std::string t = text::trim(paragraph);
  if (t.empty()) return false;
  const unsigned char c = static_cast<unsigned char>(t[0]);
  if (c == ',' || c == ';' || c == ')' || c == ':' || c == '.') return true;
  if (c == '(' || c == '[') return !starts_with(t, "[^");
  if (text::is_lower(c) && c < 0x80) return true;
  std::string word;
  for (char ch : t) {
    if (ch == ' ' || ch == ',') break;
    word.push_back(ch);
  }
  return connectives().count(word) > 0;
}

void tag_boundaries(std::vector<PageTranscript>& transcripts) {
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    auto& t = transcripts[i];
    t.markdown = strip_debug_tags(t.markdown);
    t.incomplete_start = i > 0 && !t.markdown.empty() && head_is_continuation(first_paragraph(t.markdown));
    t.incomplete_end = i + 1 < transcripts.size() && !t.markdown.empty() && !tail_is_complete(last_paragraph(t.markdown));
  }
}

std::string tagged_view(const PageTranscript& t) {
  std::string out;
  if (t.incomplete_start) out += "<INCOMPLETE_START_P" + std::to_string(t.page_index) + ">\n";
  out += t.markdown;
  if (t.incomplete_end) out += "\n<INCOMPLETE_END_P" + std::to_string(t.page_index) + ">";
  return out;
}

namespace {

struct RepairReply {
  std::string prev;
  std::string next;
};

std::optional<RepairReply> parse_repair(const std::string& reply) {
  const std::string r = strip_debug_tags(text::strip_code_fence(reply));
  const auto p = r.find("PREV_FIXED:");
  const auto n = r.find("NEXT_FIXED:");
  if (p == std::string::npos || n == std::string::npos || n < p) return std::nullopt;
  std::string prev = r.substr(p + 11, n - p - 11);
  const auto sep = prev.rfind("\n---");
  if (sep != std::string::npos) prev = prev.substr(0, sep);
  RepairReply out;
  out.prev = text::trim(prev);
  out.next = text::trim(r.substr(n + 11));
  return out;
}

// Words shared by the end of `tail` and the start of `head` (at least three),
// such as a line repeated across the page break.
std::size_t duplicate_overlap(const std::string& tail, const std::string& head) {
  const auto tw = text::split_whitespace(tail);
  const auto hw = text::split_whitespace(head);
  const std::size_t max_k = std::min(tw.size(), hw.size());
  for (std::size_t k = max_k; k >= 3; --k) {
    bool same = true;
    for (std::size_t j = 0; j < k && same; ++j) same = tw[tw.size() - k + j] == hw[j];
    if (same) return k;
  }
  return 0;
}

std::string drop_words(const std::string& s, std::size_t k) {
  std::size_t i = 0;
  for (std::size_t w = 0; w < k; ++w) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  return text::trim(s.substr(i));
}

}  // namespace

MergeResult merge_pages(std::vector<PageTranscript> transcripts, ModelClient* client, const std::string& call_tag) {
  for (std::size_t i = 1; i < transcripts.size(); ++i) {
    if (transcripts[i].page_index <= transcripts[i - 1].page_index) {
      throw ContractError("merge_pages: transcripts must be ordered by unique page_index");
    }
  }
  tag_boundaries(transcripts);
  MergeResult r;
  std::string merged;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const std::string page = text::trim(transcripts[i].markdown);
    if (i == 0 || merged.empty()) {
      if (i > 0) r.boundaries.push_back(BoundaryAction::None);
      r.page_starts.emplace_back(merged.size(), transcripts[i].page_index);
      merged += page;
      continue;
    }
    if (page.empty()) {
      r.boundaries.push_back(BoundaryAction::None);
      r.page_starts.emplace_back(merged.size(), transcripts[i].page_index);
      continue;
    }
    // Split the running text into (body, tail) and the page into (head, rest).
    const auto tail_pos = merged.rfind("\n\n");
    std::string body = tail_pos == std::string::npos ? "" : merged.substr(0, tail_pos + 2);
    std::string tail = tail_pos == std::string::npos ? merged : merged.substr(tail_pos + 2);
    const auto head_end = page.find("\n\n");
    std::string head = head_end == std::string::npos ? page : page.substr(0, head_end);
    const std::string rest = head_end == std::string::npos ? "" : page.substr(head_end);

    BoundaryAction action = BoundaryAction::None;
    std::string sep = "\n\n";
    if (const std::size_t dup = duplicate_overlap(tail, head); dup > 0) {
      head = drop_words(head, dup);
      r.warnings.push_back("page " + std::to_string(transcripts[i].page_index) + ": dropped " + std::to_string(dup) +
                           " duplicated boundary words");
    }
    const bool tail_complete = tail_is_complete(tail);
    const bool head_continues = head_is_continuation(head);
    static const std::regex kHyphenTail(R"([A-Za-z]-$)");
    if (!head.empty() && std::regex_search(tail, kHyphenTail) && text::is_lower(static_cast<unsigned char>(head[0]))) {
      // The hyphen stays; the fragments become one token ("multi-" + "agent" -> "multi-agent").
      action = BoundaryAction::Hyphen;
      sep = "";
    } else if (!tail_complete && head_continues) {
      action = BoundaryAction::Continuation;
      sep = " ";
    } else if (tail_complete && !head_continues) {
      action = BoundaryAction::None;
    } else if (client) {
      CompletionRequest req;
      req.system_text = std::string(prompts::boundary_repair);
      req.user_text = "PREV:\n" + tail + "\n\nNEXT:\n" + head;
      req.decoding = DecodingConfig::deterministic(0);
      req.call_tag = call_tag;
      const auto reply = client->complete(req);
      const auto fixed = parse_repair(reply.at(0).text);
      if (!fixed) {
        action = BoundaryAction::LlmMalformed;
        r.warnings.push_back("page " + std::to_string(transcripts[i].page_index) +
                             ": boundary repair reply lacks PREV_FIXED/NEXT_FIXED; originals kept");
      } else if (fixed->prev == text::trim(tail) && fixed->next == text::trim(head)) {
        action = BoundaryAction::LlmRejected;
      } else {
        action = BoundaryAction::LlmRepair;
        tail = fixed->prev;
        head = fixed->next;
        sep = (tail.empty() || head.empty() || tail_is_complete(tail)) ? "\n\n" : " ";
        if (tail.empty()) sep.clear();
      }
    } else {
      r.warnings.push_back("page " + std::to_string(transcripts[i].page_index) +
                           ": unresolved boundary left as a paragraph break (no model client)");
    }
    r.boundaries.push_back(action);
    merged = body + tail + sep;
    r.page_starts.emplace_back(merged.size(), transcripts[i].page_index);
    merged += head + rest;
  }
  r.text = strip_debug_tags(merged);
  return r;
}

}  // namespace citecheck::dpcm
