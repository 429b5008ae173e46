#include "citecheck/text.hpp"

#include <fnmatch.h>
#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>

namespace citecheck::text {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

const std::set<std::string>& abbreviations() {
  static const std::set<std::string> kAbbrev = {
      "e.g", "i.e", "al", "fig", "figs", "eq", "eqs", "sec", "secs", "tab", "no", "nos", "vs",
      "cf", "approx", "resp", "dr", "mr", "mrs", "ms", "prof", "st", "inc", "ltd", "jr", "sr",
      "vol", "vols", "pp", "p", "ca", "etc", "ch", "ref", "refs", "eds", "ed", "viz", "resp",
      "appx", "app", "def", "thm", "lem", "prop", "cor"};
  return kAbbrev;
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(static_cast<unsigned char>(c))) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_space(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

bool is_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }
bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }

std::size_t whitespace_token_count(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    if (is_space(static_cast<unsigned char>(c))) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

std::string normalize_title(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      out.push_back(' ');
    }
  }
  return collapse_whitespace(out);
}

std::vector<std::string> title_tokens(std::string_view s) { return split_whitespace(normalize_title(s)); }

std::string normalize_family_name(std::string_view s) {
  std::string out;
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (is_letter(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double title_similarity(std::string_view a, std::string_view b) {
  const std::string na = normalize_title(a);
  const std::string nb = normalize_title(b);
  const std::size_t longest = std::max(na.size(), nb.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(na, nb)) / static_cast<double>(longest);
}

std::string normalize_for_compare(std::string_view s) {
  std::string t(s);
  static const std::array<std::pair<const char*, const char*>, 8> kFold = {{
      {"\xE2\x80\x9C", "\""}, {"\xE2\x80\x9D", "\""}, {"\xE2\x80\x98", "'"}, {"\xE2\x80\x99", "'"},
      {"\xE2\x80\x93", "-"}, {"\xE2\x80\x94", "-"}, {"\xE2\x88\x92", "-"}, {"\xC2\xA0", " "},
  }};
  for (const auto& [from, to] : kFold) t = replace_all(std::move(t), from, to);
  t = to_lower(collapse_whitespace(t));
  while (!t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == '?' || t.back() == ' ')) t.pop_back();
  return t;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string base64_encode(std::string_view data) {
  std::string out(4 * ((data.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(data.data()),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

bool glob_match(std::string_view pattern, std::string_view text) {
  return fnmatch(std::string(pattern).c_str(), std::string(text).c_str(), 0) == 0;
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view s) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  const std::size_t n = s.size();
  std::size_t start = 0;
  int bracket_depth = 0;
  int paren_depth = 0;
  bool in_math = false;

  auto push = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    if (e > b) spans.emplace_back(b, e);
  };

  for (std::size_t i = 0; i < n; ++i) {
    const char c = s[i];
    if (c == '\\' && i + 1 < n) {
      ++i;
      continue;
    }
    if (c == '$') {
      in_math = !in_math;
      continue;
    }
    if (in_math) continue;
    if (c == '[') ++bracket_depth;
    if (c == ']' && bracket_depth > 0) --bracket_depth;
    if (c == '(') ++paren_depth;
    if (c == ')' && paren_depth > 0) --paren_depth;
    if (bracket_depth > 0 || paren_depth > 0) continue;

    std::size_t term_end = 0;
    if (c == '.' || c == '!' || c == '?') {
      term_end = i + 1;
    } else if (static_cast<unsigned char>(c) == 0xE3 && i + 2 < n &&
               static_cast<unsigned char>(s[i + 1]) == 0x80 && static_cast<unsigned char>(s[i + 2]) == 0x82) {
      term_end = i + 3;  // 。
    } else if (static_cast<unsigned char>(c) == 0xEF && i + 2 < n &&
               static_cast<unsigned char>(s[i + 1]) == 0xBC &&
               (static_cast<unsigned char>(s[i + 2]) == 0x81 || static_cast<unsigned char>(s[i + 2]) == 0x9F)) {
      term_end = i + 3;  // ！ ？
    } else {
      continue;
    }
    const bool cjk = term_end - i == 3;

    // Absorb closing quotes/brackets and trailing repeated punctuation.
    std::size_t j = term_end;
    while (j < n && (s[j] == '"' || s[j] == '\'' || s[j] == ')' || s[j] == '.' || s[j] == '!' || s[j] == '?' ||
                     s[j] == '*')) {
      ++j;
    }
    // Also absorb the UTF-8 right double/single quote.
    while (j + 2 < n + 0 && static_cast<unsigned char>(s[j]) == 0xE2 && static_cast<unsigned char>(s[j + 1]) == 0x80 &&
           (static_cast<unsigned char>(s[j + 2]) == 0x9D || static_cast<unsigned char>(s[j + 2]) == 0x99)) {
      j += 3;
    }

    if (!cjk) {
      if (j < n && !is_space(static_cast<unsigned char>(s[j]))) continue;
      std::size_t k = j;
      while (k < n && is_space(static_cast<unsigned char>(s[k]))) ++k;
      if (k < n) {
        const auto nc = static_cast<unsigned char>(s[k]);
        const bool opener = is_upper(nc) || std::isdigit(nc) || nc == '"' || nc == '\'' || nc == '(' ||
                            nc == '[' || nc == '$' || nc == '*' || nc >= 0x80;
        if (!opener) continue;
      }
      if (c == '.') {
        // Word before the period.
        std::size_t w = i;
        while (w > start && !is_space(static_cast<unsigned char>(s[w - 1])) && s[w - 1] != '(' && s[w - 1] != '[') --w;
        std::string word = to_lower(s.substr(w, i - w));
        while (!word.empty() && (word.front() == '"' || word.front() == '\'')) word.erase(word.begin());
        if (word.size() == 1 && is_letter(static_cast<unsigned char>(word[0]))) continue;  // initial
        if (abbreviations().count(word) != 0) continue;
        // "e.g." / "i.e." seen as "e.g" before the last period.
        if (!word.empty() && word.find('.') != std::string::npos) {
          bool dotted_abbrev = true;
          for (const auto& part : split(word, '.')) {
            if (part.size() > 1) dotted_abbrev = false;
          }
          if (dotted_abbrev) continue;
        }
      }
      push(start, j);
      start = j;
    } else {
      push(start, j);
      start = j;
    }
  }
  push(start, n);
  return spans;
}

std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& [b, e] : sentence_spans(s)) out.emplace_back(s.substr(b, e - b));
  return out;
}

std::string first_sentence(std::string_view s) {
  const auto spans = sentence_spans(s);
  if (spans.empty()) return trim(s);
  return std::string(s.substr(spans[0].first, spans[0].second - spans[0].first));
}

std::string strip_citation_markers(std::string_view s) {
  static const std::regex kNumeric(R"(\s*\[\s*\^?\d+(\s*(?:[-,;]|--|\xE2\x80\x93|\xE2\x80\x94)\s*\d+)*\s*\])");
  static const std::regex kAuthorYear(
      R"(\s*\((?:see |e\.g\.,? |cf\. )?[A-Z][^()]*?,?\s(?:19|20)\d{2}[a-z]?(?:;\s*[^()]*?,?\s(?:19|20)\d{2}[a-z]?)*\))");
  std::string out = std::regex_replace(std::string(s), kNumeric, "");
  out = std::regex_replace(out, kAuthorYear, "");
  out = collapse_whitespace(out);
  // " ." left behind by removed markers.
  out = replace_all(std::move(out), " .", ".");
  out = replace_all(std::move(out), " ,", ",");
  return out;
}

std::string fill_template(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string_view name = tmpl.substr(i + 1, close - i - 1);
        bool replaced = false;
        for (const auto& [k, v] : values) {
          if (k == name) {
            out.append(v);
            replaced = true;
            break;
          }
        }
        if (replaced) {
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

std::string strip_code_fence(std::string_view s) {
  std::string t = trim(s);
  if (t.rfind("```", 0) != 0) return t;
  const std::size_t first_nl = t.find('\n');
  if (first_nl == std::string::npos) return "";
  std::string body = t.substr(first_nl + 1);
  const std::size_t last = body.rfind("```");
  if (last != std::string::npos) body = body.substr(0, last);
  return trim(body);
}

}  // namespace citecheck::text
