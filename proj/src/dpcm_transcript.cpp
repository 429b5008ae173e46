#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>

#include "citecheck/dpcm.hpp"
#include "citecheck/text.hpp"

namespace citecheck::dpcm {

namespace {

struct Line {
  std::string text;
  std::size_t begin = 0;
};

std::vector<Line> split_lines(const std::string& s) {
  std::vector<Line> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string::npos) nl = s.size();
    std::string t = s.substr(start, nl - start);
    if (!t.empty() && t.back() == '\r') t.pop_back();
    out.push_back({t, start});
    if (nl == s.size()) break;
    start = nl + 1;
  }
  return out;
}

bool blank(const std::string& s) { return text::trim(s).empty(); }

int heading_level(const std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && line[i] == '#') ++i;
  if (i == 0 || i > 6 || i >= line.size() || line[i] != ' ') return 0;
  return static_cast<int>(i);
}

const std::regex& list_marker() {
  static const std::regex k(R"(^\s*(?:(?:[-*+]|•)|\d+[.)])\s+)");
  return k;
}

const std::regex& footnote_def() {
  static const std::regex k(R"(^\[\^([^\]\s]+)\]:\s*(.*)$)");
  return k;
}

const std::regex& caption_start() {
  static const std::regex k(R"(^\**(?:Figure|Fig\.|Table|Tab\.)\s*\d+)");
  return k;
}

// "References", "7 References", "VII. REFERENCES", "**References**", "References:".
bool is_bibliography_title(std::string t, const StyleConfig& style) {
  t = text::trim(t);
  t = text::replace_all(t, "**", "");
  t = text::replace_all(t, "__", "");
  static const std::regex kNumbering(R"(^(?:\d+(?:\.\d+)*\.?|[IVXLC]+\.)\s+)");
  t = std::regex_replace(t, kNumbering, "");
  while (!t.empty() && (t.back() == ':' || t.back() == '.')) t.pop_back();
  t = text::to_lower(text::trim(t));
  for (const auto& h : style.bibliography_headings) {
    if (t == text::to_lower(h)) return true;
  }
  return false;
}

// Segments the bibliography section into entry texts with offsets.
std::vector<std::pair<std::string, std::size_t>> segment_entries(const std::vector<Line>& lines) {
  static const std::regex kMarker(R"(^\s*(?:\[\d+\]|\d+\.\s|(?:[-*]|•)\s))");
  bool markers = false;
  for (const auto& l : lines) {
    if (std::regex_search(l.text, kMarker)) markers = true;
  }
  std::vector<std::pair<std::string, std::size_t>> out;
  bool open = false;
  for (const auto& l : lines) {
    if (blank(l.text)) {
      if (!markers) open = false;
      continue;
    }
    const bool starts = markers ? std::regex_search(l.text, kMarker)
                                : (!open || !std::isspace(static_cast<unsigned char>(l.text[0])));
    if (starts || out.empty()) {
      out.emplace_back(text::trim(l.text), l.begin);
    } else {
      out.back().first += " " + text::trim(l.text);
    }
    open = true;
  }
  for (auto& e : out) e.first = text::collapse_whitespace(e.first);
  return out;
}

}  // namespace

ParsedDocument parse_transcript(const std::string& markdown, const StyleConfig& style, const std::string& doc_id,
                                const MergeResult* pages) {
  ParsedDocument doc;
  doc.doc_id = doc_id;
  doc.origin = DocOrigin::Transcript;
  doc.style = style.style;
  const auto lines = split_lines(markdown);

  auto page_of = [&](std::size_t offset) { return pages ? pages->page_at(offset) : 0; };
  auto push = [&](BlockKind kind, std::string t, std::size_t begin, std::size_t end, int level = 0,
                  std::string key = "") {
    Block b;
    b.kind = kind;
    b.level = level;
    b.text = std::move(t);
    b.span = SourceSpan{page_of(begin), begin, end};
    b.key = std::move(key);
    doc.blocks.push_back(std::move(b));
  };

  std::size_t i = 0;
  bool in_bib = false;
  std::vector<Line> bib_lines;
  std::set<std::string> bib_keys;
  auto flush_bib = [&] {
    if (bib_lines.empty()) return;
    int position = 0;
    for (auto& [t, begin] : segment_entries(bib_lines)) {
      ++position;
      static const std::regex kIndex(R"(^\[(\d+)\])");
      std::smatch m;
      std::string key = std::regex_search(t, m, kIndex) ? "ref" + m[1].str() : "ref" + std::to_string(position);
      while (!bib_keys.insert(key).second) key += "b";
      push(BlockKind::BibEntry, t, begin, begin + t.size(), 0, key);
    }
    bib_lines.clear();
  };

  while (i < lines.size()) {
    const Line& line = lines[i];
    const std::string trimmed = text::trim(line.text);
    if (trimmed.empty()) {
      if (in_bib) bib_lines.push_back(line);
      ++i;
      continue;
    }
    // Footnote definitions may follow continuation lines.
    std::smatch fm;
    if (std::regex_match(trimmed, fm, footnote_def())) {
      std::string body = fm[2].str();
      std::size_t j = i + 1;
      while (j < lines.size() && !blank(lines[j].text) && std::isspace(static_cast<unsigned char>(lines[j].text[0]))) {
        body += " " + text::trim(lines[j].text);
        ++j;
      }
      push(BlockKind::Footnote, text::collapse_whitespace(body), line.begin,
           lines[j - 1].begin + lines[j - 1].text.size(), 0, fm[1].str());
      i = j;
      continue;
    }
    const int level = heading_level(trimmed);
    if (level > 0 || (is_bibliography_title(trimmed, style) && trimmed.size() < 40)) {
      if (in_bib) flush_bib();
      std::string t = level > 0 ? text::trim(trimmed.substr(static_cast<std::size_t>(level))) : trimmed;
      t = text::replace_all(t, "**", "");
      in_bib = is_bibliography_title(t, style);
      push(BlockKind::Heading, text::trim(t), line.begin, line.begin + line.text.size(), level > 0 ? level : 1);
      ++i;
      continue;
    }
    if (in_bib) {
      bib_lines.push_back(line);
      ++i;
      continue;
    }
    if (trimmed.rfind("$$", 0) == 0) {
      std::string body = trimmed;
      std::size_t j = i;
      const bool closed_on_line = trimmed.size() >= 4 && trimmed.find("$$", 2) != std::string::npos;
      if (!closed_on_line) {
        ++j;
        while (j < lines.size()) {
          body += " " + text::trim(lines[j].text);
          if (lines[j].text.find("$$") != std::string::npos) break;
          ++j;
        }
        if (j >= lines.size()) j = lines.size() - 1;
      }
      push(BlockKind::DisplayMath, text::collapse_whitespace(body), line.begin,
           lines[j].begin + lines[j].text.size());
      i = j + 1;
      continue;
    }
    std::smatch lm;
    if (std::regex_search(line.text, lm, list_marker())) {
      std::string body = line.text.substr(static_cast<std::size_t>(lm.length(0)));
      std::size_t j = i + 1;
      while (j < lines.size() && !blank(lines[j].text) && !std::regex_search(lines[j].text, list_marker()) &&
             heading_level(text::trim(lines[j].text)) == 0 && std::isspace(static_cast<unsigned char>(lines[j].text[0]))) {
        body += " " + text::trim(lines[j].text);
        ++j;
      }
      push(BlockKind::ListItem, text::collapse_whitespace(body), line.begin,
           lines[j - 1].begin + lines[j - 1].text.size());
      i = j;
      continue;
    }
    // Paragraph: consecutive non-blank lines that do not start another block.
    std::string body = trimmed;
    std::size_t j = i + 1;
    while (j < lines.size()) {
      const std::string t = text::trim(lines[j].text);
      if (t.empty() || heading_level(t) > 0 || t.rfind("$$", 0) == 0 || std::regex_search(lines[j].text, list_marker()) ||
          std::regex_match(t, footnote_def()) || (is_bibliography_title(t, style) && t.size() < 40)) {
        break;
      }
      body += " " + t;
      ++j;
    }
    body = text::collapse_whitespace(body);
    const BlockKind kind = std::regex_search(body, caption_start()) ? BlockKind::Caption : BlockKind::Paragraph;
    push(kind, body, line.begin, lines[j - 1].begin + lines[j - 1].text.size());
    i = j;
  }
  if (in_bib) flush_bib();
  doc.index_sentences();
  return doc;
}

// ---- reference strings -----------------------------------------------------------

namespace {

bool is_initials(const std::string& s) {
  // "J.", "J. K.", "J.-P.", "JK" (Vancouver)
  const std::string t = text::trim(s);
  if (t.empty()) return false;
  bool any = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(t[i]);
    if (text::is_upper(c)) {
      any = true;
      // Next must not be a lowercase letter (that would be a name).
      if (i + 1 < t.size() && text::is_lower(static_cast<unsigned char>(t[i + 1]))) return false;
    } else if (c != '.' && c != ' ' && c != '-') {
      return false;
    }
  }
  return any && t.size() <= 8;
}

std::string initials_of(const std::string& given) {
  std::string out;
  for (const auto& part : text::split_whitespace(text::replace_all(given, ".", ". "))) {
    if (!part.empty() && text::is_upper(static_cast<unsigned char>(part[0]))) out += std::string(1, part[0]) + ".";
  }
  return out;
}

std::vector<Author> parse_author_list(std::string s) {
  s = text::replace_all(s, " et al.", "");
  s = text::replace_all(s, " et al", "");
  s = text::replace_all(s, ", and ", ", ");
  s = text::replace_all(s, " and ", ", ");
  s = text::replace_all(s, ", & ", ", ");
  s = text::replace_all(s, " & ", ", ");
  s = text::replace_all(s, ";", ",");
  std::vector<Author> out;
  bool last_needs_initials = false;
  for (auto piece : text::split(s, ',')) {
    piece = text::trim(piece);
    if (piece.empty()) continue;
    if (is_initials(piece)) {
      if (last_needs_initials && !out.empty()) {
        std::string ini;
        for (char c : piece) {
          if (text::is_upper(static_cast<unsigned char>(c))) ini += std::string(1, c) + ".";
        }
        out.back().initials = ini;
        last_needs_initials = false;
      }
      continue;
    }
    auto tokens = text::split_whitespace(piece);
    Author a;
    if (tokens.size() == 1) {
      a.family = tokens[0];
      last_needs_initials = true;
    } else if (is_initials(tokens.back())) {
      // "Smith JK" (Vancouver)
      std::string ini;
      for (char c : tokens.back()) {
        if (text::is_upper(static_cast<unsigned char>(c))) ini += std::string(1, c) + ".";
      }
      tokens.pop_back();
      a.family = text::join(tokens, " ");
      a.initials = ini;
      last_needs_initials = false;
    } else {
      // "A. B. Smith", "Alice Smith", "Jan van der Berg"
      static const std::set<std::string> kParticles = {"van", "von", "de", "der", "den", "del", "da", "di", "du", "la", "le"};
      std::size_t family_start = tokens.size() - 1;
      while (family_start > 0 && kParticles.count(tokens[family_start - 1])) --family_start;
      std::vector<std::string> given(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(family_start));
      std::vector<std::string> family(tokens.begin() + static_cast<std::ptrdiff_t>(family_start), tokens.end());
      a.family = text::join(family, " ");
      a.initials = initials_of(text::join(given, " "));
      last_needs_initials = false;
    }
    while (!a.family.empty() && (a.family.back() == '.' || a.family.back() == ',')) a.family.pop_back();
    if (!a.family.empty()) out.push_back(a);
  }
  return out;
}

// End of the author block in "A. Smith, B. Jones. Title. Venue, 2020." style:
// the first ". " whose preceding token is longer than one letter.
std::size_t author_block_end(const std::string& s) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] != '.' || s[i + 1] != ' ') continue;
    std::size_t j = i;
    while (j > 0 && !std::isspace(static_cast<unsigned char>(s[j - 1])) && s[j - 1] != '.' && s[j - 1] != ',') --j;
    const std::string token = s.substr(j, i - j);
    if (token.size() > 1) return i;  // single letters are initials
  }
  return std::string::npos;
}

std::string next_segment(const std::string& s, std::size_t from, std::size_t* end_out) {
  // Up to the next ". ", "? ", "! " or the end.
  std::size_t i = from;
  for (; i < s.size(); ++i) {
    if ((s[i] == '.' || s[i] == '?' || s[i] == '!') && (i + 1 == s.size() || s[i + 1] == ' ')) break;
  }
  if (end_out) *end_out = std::min(s.size(), i + 1);
  std::string seg = s.substr(from, i - from);
  if (i < s.size() && (s[i] == '?' || s[i] == '!')) seg.push_back(s[i]);
  return text::trim(seg);
}

}  // namespace

BibEntry parse_reference_string(const std::string& raw_in, int entry_index) {
  BibEntry e;
  e.raw = text::collapse_whitespace(raw_in);
  e.entry_index = entry_index;
  std::string s = e.raw;

  static const std::regex kLead(R"(^\s*(?:\[(\d+)\]|(\d+)\.(?=\s)|(?:[-*]|•)(?=\s)))");
  std::smatch m;
  if (std::regex_search(s, m, kLead)) {
    if (m[1].matched) e.entry_index = std::stoi(m[1].str());
    if (m[2].matched) e.entry_index = std::stoi(m[2].str());
    s = text::trim(s.substr(static_cast<std::size_t>(m.length(0))));
  }

  static const std::regex kDoi(R"((10\.\d{4,9}/[^\s]+))");
  if (std::regex_search(s, m, kDoi)) {
    std::string doi = m[1].str();
    while (!doi.empty() && (doi.back() == '.' || doi.back() == ',' || doi.back() == ';' || doi.back() == ')')) doi.pop_back();
    e.doi = doi;
  }
  static const std::regex kArxiv(R"((?:arXiv:\s*|arxiv\.org/abs/)(\d{4}\.\d{4,5}(?:v\d+)?))", std::regex::icase);
  if (std::regex_search(s, m, kArxiv)) e.arxiv = m[1].str();

  // APA-like: "Authors (2020). Title. Venue."
  static const std::regex kParenYear(R"(\(((?:19|20)\d{2})[a-z]?\)\.?)");
  std::size_t title_from = std::string::npos;
  if (std::regex_search(s, m, kParenYear)) {
    e.year = std::stoi(m[1].str());
    e.authors = parse_author_list(s.substr(0, static_cast<std::size_t>(m.position(0))));
    title_from = static_cast<std::size_t>(m.position(0) + m.length(0));
  } else {
    const std::size_t end = author_block_end(s);
    if (end != std::string::npos) {
      e.authors = parse_author_list(s.substr(0, end));
      title_from = end + 1;
    }
    static const std::regex kYear(R"(\b((?:19|20)\d{2})[a-z]?\b)");
    std::string rest = title_from == std::string::npos ? s : s.substr(title_from);
    // Prefer the last plausible year (after the title, before identifiers).
    std::optional<int> year;
    for (auto it = std::sregex_iterator(rest.begin(), rest.end(), kYear); it != std::sregex_iterator(); ++it) {
      const auto pos = static_cast<std::size_t>(it->position(0));
      const std::string before = rest.substr(0, pos);
      if (before.find("10.") != std::string::npos && before.rfind("10.") + 3 > before.size() - 12) continue;
      if (before.size() >= 6 && before.substr(before.size() - 6).find("arXiv") != std::string::npos) continue;
      year = std::stoi((*it)[1].str());
    }
    e.year = year;
  }
  if (title_from != std::string::npos && title_from < s.size()) {
    std::size_t title_end = 0;
    e.title = next_segment(s, title_from, &title_end);
    std::size_t venue_end = 0;
    std::string venue = next_segment(s, title_end, &venue_end);
    // Venue ends at the first comma or a digit run; drop identifiers.
    static const std::regex kVenueCut(R"(,?\s*(?:(?:19|20)\d{2}|\d+\s*\(|\d+[:,]|vol\.|pp\.|doi:|https?://|arXiv).*$)", std::regex::icase);
    venue = std::regex_replace(venue, kVenueCut, "");
    const auto comma = venue.find(',');
    if (comma != std::string::npos) venue = venue.substr(0, comma);
    static const std::regex kIdOnly(R"(^(?:doi|https?|arxiv)\b)", std::regex::icase);
    if (std::regex_search(venue, kIdOnly)) venue.clear();
    e.venue = text::trim(venue);
  }
  e.title_tokens = text::title_tokens(e.title);
  return e;
}

// ---- bibliography ----------------------------------------------------------------

BibliographyResult parse_bibliography(const ParsedDocument& doc) {
  BibliographyResult r;
  if (doc.origin == DocOrigin::Markup) {
    r.entries = doc.bibliography;
    if (r.entries.empty()) {
      r.anomalies.push_back(ExtractionAnomaly{AnomalyKind::SuspiciousSegment, 0, doc.blocks.size(), 0, 0,
                                              "no bibliography metadata found"});
    }
    return r;
  }
  int position = 0;
  bool heading = false;
  for (std::size_t b = 0; b < doc.blocks.size(); ++b) {
    const Block& blk = doc.blocks[b];
    if (blk.kind == BlockKind::BibEntry) {
      BibEntry e = parse_reference_string(blk.text, ++position);
      e.key = blk.key.empty() ? "ref" + std::to_string(position) : blk.key;
      r.entries.push_back(std::move(e));
      heading = true;
    }
  }
  // Footnotes that read like references form an inline bibliography.
  static const std::regex kRefLike(R"(\b(?:19|20)\d{2}\b|10\.\d{4,9}/)");
  for (const Block& blk : doc.blocks) {
    if (blk.kind != BlockKind::Footnote || !std::regex_search(blk.text, kRefLike)) continue;
    BibEntry e = parse_reference_string(blk.text, 0);
    e.key = "fn" + blk.key;
    e.footnote = true;
    r.entries.push_back(std::move(e));
  }
  if (!heading) {
    const bool has_footnote_refs = std::any_of(r.entries.begin(), r.entries.end(), [](const BibEntry& e) { return e.footnote; });
    if (!has_footnote_refs) {
      r.anomalies.push_back(ExtractionAnomaly{AnomalyKind::SuspiciousSegment, 0, doc.blocks.size(),
                                              doc.blocks.empty() ? 0 : doc.blocks.front().span.page,
                                              doc.blocks.empty() ? 0 : doc.blocks.back().span.page,
                                              "no bibliography section found"});
    }
  }
  return r;
}

}  // namespace citecheck::dpcm
