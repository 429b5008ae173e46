#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <regex>
#include <set>
#include <sstream>

#include "citecheck/dpcm.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/text.hpp"

namespace citecheck::dpcm {

namespace {

namespace fs = std::filesystem;

// ---- shared helpers --------------------------------------------------------------

std::pair<std::size_t, std::size_t> line_col(const std::string& s, std::size_t pos) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < pos && i < s.size(); ++i) {
    if (s[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

[[noreturn]] void fail_at(const std::string& src, std::size_t pos, const std::string& msg) {
  const auto [l, c] = line_col(src, pos);
  throw ParseError(msg, l, c);
}

std::string author_year_names(const std::vector<Author>& authors) {
  if (authors.empty()) return "Anon.";
  if (authors.size() == 1) return authors[0].family;
  if (authors.size() == 2) return authors[0].family + " & " + authors[1].family;
  return authors[0].family + " et al.";
}

std::string year_text(const BibEntry& e) { return e.year ? std::to_string(*e.year) : "n.d."; }

// Appends text with whitespace collapsed on the fly so recorded offsets stay valid.
struct Buffer {
  std::string text;
  std::size_t src_begin = std::string::npos;
  std::size_t src_end = 0;

  void put(std::string_view s) {
    for (char c : s) put_char(c);
  }
  void put_char(char c) {
    if (c == '\n' || c == '\t' || c == '\r') c = ' ';
    if (c == ' ') {
      if (text.empty() || text.back() == ' ') return;
    }
    text.push_back(c);
  }
  void touch(std::size_t pos) {
    if (src_begin == std::string::npos) src_begin = pos;
    src_end = std::max(src_end, pos + 1);
  }
  bool blank() const { return text::trim(text).empty(); }
};

struct PendingAnchor {
  Anchor anchor;
};

// Cited-key registry used while rendering citations in either markup flavour.
struct CitationRenderer {
  const StyleConfig* style = nullptr;
  std::map<std::string, const BibEntry*> by_key;
  std::string doc_id;
  int next_id = 1;

  std::string next_occurrence() { return (doc_id.empty() ? "doc" : doc_id) + "#o" + std::to_string(next_id++); }

  // command: cite, citep, citet, citealp, citeauthor, citeyear, parencite, textcite
  std::string render(const std::string& command, const std::vector<std::string>& keys,
                     std::vector<std::string>& unresolved) const {
    std::vector<const BibEntry*> found;
    for (const auto& k : keys) {
      auto it = by_key.find(k);
      if (it == by_key.end()) {
        unresolved.push_back(k);
        found.push_back(nullptr);
      } else {
        found.push_back(it->second);
      }
    }
    if (style->style == CitationStyle::Numeric || style->style == CitationStyle::Footnote) {
      std::vector<std::string> parts;
      for (const auto* e : found) parts.push_back(e ? std::to_string(e->entry_index) : "?");
      return "[" + text::join(parts, ", ") + "]";
    }
    const bool narrative = command == "citet" || command == "textcite" || command == "cite";
    std::vector<std::string> parts;
    for (const auto* e : found) {
      if (!e) {
        parts.push_back("?");
        continue;
      }
      if (command == "citeauthor") {
        parts.push_back(author_year_names(e->authors));
      } else if (command == "citeyear") {
        parts.push_back(year_text(*e));
      } else if (narrative) {
        parts.push_back(author_year_names(e->authors) + " (" + year_text(*e) + ")");
      } else {
        parts.push_back(author_year_names(e->authors) + ", " + year_text(*e));
      }
    }
    const std::string joined = text::join(parts, "; ");
    if (command == "citep" || command == "parencite") return "(" + joined + ")";
    return joined;
  }
};

// ---- BibTeX -----------------------------------------------------------------------

std::vector<Author> parse_bibtex_authors(const std::string& field) {
  std::vector<Author> out;
  std::string s = text::collapse_whitespace(field);
  std::vector<std::string> names;
  std::size_t start = 0;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}') --depth;
    if (depth == 0 && s.compare(i, 5, " and ") == 0) {
      names.push_back(s.substr(start, i - start));
      start = i + 5;
      i += 4;
    }
  }
  names.push_back(s.substr(start));
  for (auto name : names) {
    name.erase(std::remove(name.begin(), name.end(), '{'), name.end());
    name.erase(std::remove(name.begin(), name.end(), '}'), name.end());
    name = text::trim(name);
    if (name.empty() || name == "others") continue;
    Author a;
    const auto comma = name.find(',');
    std::string given;
    if (comma != std::string::npos) {
      a.family = text::trim(name.substr(0, comma));
      given = text::trim(name.substr(comma + 1));
    } else {
      auto parts = text::split_whitespace(name);
      a.family = parts.back();
      parts.pop_back();
      given = text::join(parts, " ");
    }
    std::string initials;
    for (const auto& g : text::split_whitespace(text::replace_all(given, "-", " "))) {
      if (!g.empty()) initials += std::string(1, g[0]) + ".";
    }
    a.initials = initials;
    out.push_back(a);
  }
  return out;
}

std::string strip_braces(std::string s) {
  s.erase(std::remove(s.begin(), s.end(), '{'), s.end());
  s.erase(std::remove(s.begin(), s.end(), '}'), s.end());
  return text::collapse_whitespace(s);
}

std::vector<BibEntry> parse_bibtex(const std::string& src) {
  std::vector<BibEntry> out;
  std::size_t i = 0;
  while ((i = src.find('@', i)) != std::string::npos) {
    std::size_t j = i + 1;
    while (j < src.size() && std::isalpha(static_cast<unsigned char>(src[j]))) ++j;
    const std::string type = text::to_lower(src.substr(i + 1, j - i - 1));
    while (j < src.size() && std::isspace(static_cast<unsigned char>(src[j]))) ++j;
    if (j >= src.size() || (src[j] != '{' && src[j] != '(')) {
      i = j;
      continue;
    }
    // Matching close.
    int depth = 0;
    std::size_t k = j;
    for (; k < src.size(); ++k) {
      if (src[k] == '{' || src[k] == '(') ++depth;
      if (src[k] == '}' || src[k] == ')') {
        if (--depth == 0) break;
      }
    }
    if (k >= src.size()) fail_at(src, i, "unterminated bibtex entry");
    const std::string body = src.substr(j + 1, k - j - 1);
    i = k + 1;
    if (type == "comment" || type == "preamble" || type == "string") continue;
    const auto comma = body.find(',');
    if (comma == std::string::npos) continue;
    BibEntry e;
    e.key = text::trim(body.substr(0, comma));
    std::map<std::string, std::string> fields;
    std::size_t p = comma + 1;
    while (p < body.size()) {
      while (p < body.size() && (std::isspace(static_cast<unsigned char>(body[p])) || body[p] == ',')) ++p;
      std::size_t q = p;
      while (q < body.size() && body[q] != '=') ++q;
      if (q >= body.size()) break;
      const std::string name = text::to_lower(text::trim(body.substr(p, q - p)));
      p = q + 1;
      while (p < body.size() && std::isspace(static_cast<unsigned char>(body[p]))) ++p;
      std::string value;
      if (p < body.size() && body[p] == '{') {
        int d = 0;
        std::size_t r = p;
        for (; r < body.size(); ++r) {
          if (body[r] == '{') ++d;
          if (body[r] == '}' && --d == 0) break;
        }
        value = body.substr(p + 1, r - p - 1);
        p = r + 1;
      } else if (p < body.size() && body[p] == '"') {
        std::size_t r = body.find('"', p + 1);
        if (r == std::string::npos) r = body.size();
        value = body.substr(p + 1, r - p - 1);
        p = r + 1;
      } else {
        std::size_t r = p;
        while (r < body.size() && body[r] != ',') ++r;
        value = text::trim(body.substr(p, r - p));
        p = r;
      }
      fields[name] = value;
    }
    e.authors = parse_bibtex_authors(fields["author"]);
    if (!fields["year"].empty()) {
      try {
        e.year = std::stoi(fields["year"]);
      } catch (const std::exception&) {
      }
    }
    e.title = strip_braces(fields["title"]);
    e.title_tokens = text::title_tokens(e.title);
    e.venue = strip_braces(!fields["journal"].empty() ? fields["journal"] : fields["booktitle"]);
    if (!fields["doi"].empty()) e.doi = text::trim(fields["doi"]);
    if (!fields["eprint"].empty()) e.arxiv = text::trim(fields["eprint"]);
    std::vector<std::string> names;
    for (const auto& a : e.authors) names.push_back(a.initials.empty() ? a.family : a.initials + " " + a.family);
    std::string raw = text::join(names, ", ") + ". " + e.title + ".";
    if (!e.venue.empty()) raw += " " + e.venue + ",";
    raw += " " + year_text(e) + ".";
    if (e.doi) raw += " doi:" + *e.doi;
    e.raw = raw;
    out.push_back(std::move(e));
  }
  return out;
}

// ---- LaTeX ------------------------------------------------------------------------

const std::set<std::string>& presentational_macros() {
  static const std::set<std::string> k = {
      "centering", "small", "large", "Large", "LARGE", "huge", "Huge", "normalsize", "footnotesize", "scriptsize",
      "tiny", "noindent", "indent", "newline", "linebreak", "clearpage", "newpage", "pagebreak", "hfill", "vfill",
      "medskip", "bigskip", "smallskip", "protect", "maketitle", "tableofcontents", "bf", "it", "em", "rm", "sf",
      "tt", "sc", "raggedright", "raggedleft", "flushbottom", "onecolumn", "twocolumn", "appendix", "relax",
      "sloppy", "frenchspacing", "bibliographystyle", "selectfont", "break", "nobreak", "quad", "qquad",
      "displaystyle", "leavevmode", "null", "today", "and"};
  return k;
}

// Macros whose braced arguments are dropped along with the macro.
const std::map<std::string, int>& dropped_macros() {
  static const std::map<std::string, int> k = {
      {"label", 1},   {"vspace", 1},         {"hspace", 1},          {"bibliographystyle", 1},
      {"pagestyle", 1}, {"thispagestyle", 1}, {"setlength", 2},      {"addtolength", 2},
      {"usepackage", 1}, {"documentclass", 1}, {"title", 1},          {"author", 1},
      {"date", 1},    {"thanks", 1},         {"keywords", 1},        {"includegraphics", 1},
      {"nocite", 1},  {"newcommand", 2},     {"renewcommand", 2},    {"definecolor", 3},
      {"affiliation", 1}, {"email", 1},      {"address", 1},          {"fontsize", 2},
      {"addcontentsline", 3}, {"markboth", 2}, {"setcounter", 2},    {"vskip", 0}};
  return k;
}

const std::set<std::string>& transparent_macros() {
  static const std::set<std::string> k = {"textrm", "textsf", "textnormal", "textup", "textmd", "mbox", "text",
                                          "textsc", "underline", "uline", "makebox", "hbox", "emph_inner", "MakeUppercase",
                                          "textsuperscript_inner"};
  return k;
}

const std::set<std::string>& citation_commands() {
  static const std::set<std::string> k = {"cite", "citep", "citet", "citealp", "citealt", "parencite", "textcite",
                                          "autocite", "citeauthor", "citeyear", "Cite", "Citep", "Citet"};
  return k;
}

const std::set<std::string>& reference_commands() {
  static const std::set<std::string> k = {"ref", "eqref", "cref", "Cref", "autoref", "pageref", "nameref"};
  return k;
}

const std::map<std::string, int>& section_levels() {
  static const std::map<std::string, int> k = {{"part", 1},          {"chapter", 1},    {"section", 1},
                                               {"subsection", 2},    {"subsubsection", 3}, {"paragraph", 4},
                                               {"subparagraph", 5}};
  return k;
}

const std::set<std::string>& display_envs() {
  static const std::set<std::string> k = {"equation", "equation*", "align",   "align*",  "gather",     "gather*",
                                          "multline", "multline*", "eqnarray", "eqnarray*", "displaymath", "flalign",
                                          "flalign*", "alignat",   "alignat*"};
  return k;
}

const std::map<std::string, std::string>& accent_table() {
  static const std::map<std::string, std::string> k = {
      {"'e", "é"}, {"`e", "è"}, {"^e", "ê"}, {"\"e", "ë"}, {"'a", "á"}, {"`a", "à"}, {"^a", "â"}, {"\"a", "ä"},
      {"'o", "ó"}, {"`o", "ò"}, {"^o", "ô"}, {"\"o", "ö"}, {"'u", "ú"}, {"`u", "ù"}, {"^u", "û"}, {"\"u", "ü"},
      {"'i", "í"}, {"\"i", "ï"}, {"~n", "ñ"}, {"cc", "ç"}, {"'E", "É"}, {"\"O", "Ö"}, {"\"U", "Ü"}, {"\"A", "Ä"},
      {"'c", "ć"}, {"vc", "č"}, {"vs", "š"}, {"vz", "ž"}, {"'n", "ń"}, {"~a", "ã"}, {"~o", "õ"}};
  return k;
}

class LatexConverter {
 public:
  LatexConverter(const std::string& source, const StyleConfig& style, const std::string& doc_id)
      : raw_(source), style_(style) {
    doc_.doc_id = doc_id;
    doc_.origin = DocOrigin::Markup;
    doc_.style = style.style;
    cites_.style = &style_;
    cites_.doc_id = doc_id;
  }

  ParsedDocument run() {
    strip_comments();
    locate_body();
    check_balance();
    collect_bibliography();
    flow(body_begin_, body_end_);
    flush_paragraph();
    emit_bibliography();
    doc_.index_sentences();
    return std::move(doc_);
  }

 private:
  // ---- preprocessing ----
  void strip_comments() {
    src_ = raw_;
    for (std::size_t i = 0; i < src_.size(); ++i) {
      if (src_[i] == '\\' && i + 1 < src_.size()) {
        ++i;
        continue;
      }
      if (src_[i] == '%') {
        while (i < src_.size() && src_[i] != '\n') src_[i++] = ' ';
      }
    }
  }

  void locate_body() {
    const std::string open = "\\begin{document}";
    const std::string close = "\\end{document}";
    const auto b = src_.find(open);
    if (b == std::string::npos) {
      body_begin_ = 0;
      body_end_ = src_.size();
      return;
    }
    body_begin_ = b + open.size();
    const auto e = src_.find(close, body_begin_);
    if (e == std::string::npos) fail_at(raw_, b, "\\begin{document} without \\end{document}");
    body_end_ = e;
  }

  void check_balance() {
    std::vector<std::size_t> braces;
    std::vector<std::pair<std::string, std::size_t>> envs;
    for (std::size_t i = body_begin_; i < body_end_; ++i) {
      const char c = src_[i];
      if (c == '\\') {
        if (src_.compare(i, 7, "\\begin{") == 0 || src_.compare(i, 5, "\\end{") == 0) {
          const bool begin = src_[i + 1] == 'b';
          const std::size_t name_start = src_.find('{', i) + 1;
          const std::size_t name_end = src_.find('}', name_start);
          if (name_end == std::string::npos) fail_at(raw_, i, "unterminated environment name");
          const std::string name = src_.substr(name_start, name_end - name_start);
          if (begin) {
            envs.emplace_back(name, i);
          } else {
            if (envs.empty()) fail_at(raw_, i, "\\end{" + name + "} without matching \\begin");
            if (envs.back().first != name)
              fail_at(raw_, i, "\\end{" + name + "} closes \\begin{" + envs.back().first + "}");
            envs.pop_back();
          }
          i = name_end;
          continue;
        }
        ++i;  // escaped char, including \{ and \}
        continue;
      }
      if (c == '{') braces.push_back(i);
      if (c == '}') {
        if (braces.empty()) fail_at(raw_, i, "unbalanced '}'");
        braces.pop_back();
      }
    }
    if (!braces.empty()) fail_at(raw_, braces.back(), "unbalanced '{'");
    if (!envs.empty()) fail_at(raw_, envs.back().second, "unclosed environment '" + envs.back().first + "'");
  }

  // ---- bibliography pre-pass ----
  void collect_bibliography() {
    // thebibliography
    const std::string open = "\\begin{thebibliography}";
    const auto b = src_.find(open, body_begin_);
    if (b != std::string::npos && b < body_end_) {
      const auto e = src_.find("\\end{thebibliography}", b);
      bib_env_begin_ = b;
      bib_env_end_ = e + std::string("\\end{thebibliography}").size();
      std::size_t p = src_.find("\\bibitem", b);
      int index = 0;
      while (p != std::string::npos && p < e) {
        std::size_t q = p + 8;
        std::string opt;
        skip_ws(q);
        if (q < e && src_[q] == '[') {
          const std::size_t close = find_matching(q, '[', ']');
          opt = src_.substr(q + 1, close - q - 1);
          q = close + 1;
        }
        skip_ws(q);
        if (q >= e || src_[q] != '{') fail_at(raw_, p, "\\bibitem without key");
        const std::size_t kclose = find_matching(q, '{', '}');
        const std::string key = text::trim(src_.substr(q + 1, kclose - q - 1));
        std::size_t next = src_.find("\\bibitem", kclose);
        const std::size_t stop = (next == std::string::npos || next > e) ? e : next;
        Buffer buf;
        render_inline_to(buf, kclose + 1, stop);
        std::string rendered = text::trim(buf.text);
        BibEntry entry = parse_reference_string(rendered, ++index);
        entry.key = key;
        if (!opt.empty()) apply_natbib_label(entry, opt);
        entry.raw = rendered;
        bib_spans_.emplace_back(p, stop);
        doc_.bibliography.push_back(std::move(entry));
        p = next;
      }
    }
    // \bibliography{file}
    static const std::regex kBibCmd(R"(\\bibliography\{([^}]*)\})");
    std::smatch m;
    const std::string body = src_.substr(body_begin_, body_end_ - body_begin_);
    if (std::regex_search(body, m, kBibCmd)) {
      std::vector<BibEntry> loaded;
      for (auto name : text::split(m[1].str(), ',')) {
        name = text::trim(name);
        if (name.empty()) continue;
        fs::path path = fs::path(style_.base_dir) / name;
        if (path.extension() != ".bib") path += ".bib";
        std::ifstream in(path);
        if (!in) {
          doc_.warnings.push_back("bibliography file not found: " + path.string());
          continue;
        }
        std::ostringstream os;
        os << in.rdbuf();
        auto entries = parse_bibtex(os.str());
        loaded.insert(loaded.end(), entries.begin(), entries.end());
      }
      // Numbered by first citation, uncited entries after in file order.
      static const std::regex kCite(R"(\\(?:cite|citep|citet|citealp|citealt|parencite|textcite|autocite|nocite)\*?(?:\[[^\]]*\])*\{([^}]*)\})");
      std::vector<std::string> order;
      for (auto it = std::sregex_iterator(body.begin(), body.end(), kCite); it != std::sregex_iterator(); ++it) {
        for (auto k : text::split((*it)[1].str(), ',')) {
          k = text::trim(k);
          if (std::find(order.begin(), order.end(), k) == order.end()) order.push_back(k);
        }
      }
      std::vector<BibEntry> ordered;
      for (const auto& k : order) {
        for (auto& e : loaded) {
          if (e.key == k && e.entry_index == 0) {
            e.entry_index = -1;
            ordered.push_back(e);
          }
        }
      }
      for (auto& e : loaded) {
        if (e.entry_index == 0) ordered.push_back(e);
      }
      int base = static_cast<int>(doc_.bibliography.size());
      for (auto& e : ordered) {
        e.entry_index = ++base;
        doc_.bibliography.push_back(e);
      }
    }
    std::set<std::string> seen;
    for (const auto& e : doc_.bibliography) {
      if (!seen.insert(e.key).second) doc_.warnings.push_back("duplicate bibliography key '" + e.key + "'");
    }
    for (const auto& e : doc_.bibliography) cites_.by_key.emplace(e.key, &e);
  }

  // natbib "[Smith et al.(2020)]" / "[Smith and Brown(2019)]".
  static void apply_natbib_label(BibEntry& entry, const std::string& opt) {
    static const std::regex kLabel(R"(^\s*(.*?)\s*\(\s*((?:19|20)\d{2})[a-z]?\s*\)\s*(.*)$)");
    std::smatch m;
    if (!std::regex_match(opt, m, kLabel)) return;
    entry.year = std::stoi(m[2].str());
    if (!entry.authors.empty()) return;
    std::string names = m[1].str();
    names = text::replace_all(names, " et al.", "");
    for (auto part : std::vector<std::string>{names}) {
      for (auto n : text::split(text::replace_all(text::replace_all(part, " and ", ","), " & ", ","), ',')) {
        n = text::trim(n);
        if (!n.empty()) entry.authors.push_back(Author{n, ""});
      }
    }
  }

  void emit_bibliography() {
    if (doc_.bibliography.empty()) return;
    flush_paragraph();
    Block h;
    h.kind = BlockKind::Heading;
    h.level = 1;
    h.text = "References";
    h.span = SourceSpan{0, bib_env_begin_ == std::string::npos ? body_end_ : bib_env_begin_,
                        bib_env_begin_ == std::string::npos ? body_end_ : bib_env_begin_};
    doc_.blocks.push_back(h);
    for (std::size_t i = 0; i < doc_.bibliography.size(); ++i) {
      const BibEntry& e = doc_.bibliography[i];
      Block b;
      b.kind = BlockKind::BibEntry;
      b.key = e.key;
      b.text = (style_.style == CitationStyle::AuthorYear ? "" : "[" + std::to_string(e.entry_index) + "] ") + e.raw;
      if (i < bib_spans_.size()) b.span = SourceSpan{0, bib_spans_[i].first, bib_spans_[i].second};
      doc_.blocks.push_back(b);
    }
  }

  // ---- scanning primitives ----
  void skip_ws(std::size_t& p) const {
    while (p < src_.size() && std::isspace(static_cast<unsigned char>(src_[p]))) ++p;
  }

  std::size_t find_matching(std::size_t open_pos, char open, char close) const {
    int depth = 0;
    for (std::size_t i = open_pos; i < src_.size(); ++i) {
      if (src_[i] == '\\') {
        ++i;
        continue;
      }
      if (src_[i] == open) ++depth;
      if (src_[i] == close && --depth == 0) return i;
    }
    fail_at(raw_, open_pos, std::string("unbalanced '") + open + "'");
  }

  // Reads "{...}" after optional whitespace; returns [inner_begin, inner_end) and moves p past it.
  std::optional<std::pair<std::size_t, std::size_t>> read_group(std::size_t& p) const {
    std::size_t q = p;
    skip_ws(q);
    if (q >= src_.size() || src_[q] != '{') return std::nullopt;
    const std::size_t close = find_matching(q, '{', '}');
    p = close + 1;
    return std::make_pair(q + 1, close);
  }

  std::optional<std::string> read_optional(std::size_t& p) const {
    std::size_t q = p;
    skip_ws(q);
    if (q >= src_.size() || src_[q] != '[') return std::nullopt;
    const std::size_t close = find_matching(q, '[', ']');
    p = close + 1;
    return src_.substr(q + 1, close - q - 1);
  }

  std::string group_text(std::pair<std::size_t, std::size_t> g) const { return src_.substr(g.first, g.second - g.first); }

  std::string read_macro_name(std::size_t& p) const {
    // p points after the backslash.
    std::size_t q = p;
    while (q < src_.size() && std::isalpha(static_cast<unsigned char>(src_[q]))) ++q;
    if (q == p && q < src_.size()) ++q;  // single-char control symbol
    std::string name = src_.substr(p, q - p);
    if (q < src_.size() && src_[q] == '*' && std::isalpha(static_cast<unsigned char>(name[0]))) {
      name += '*';
      ++q;
    }
    p = q;
    return name;
  }

  // ---- block assembly ----
  void flush_paragraph(BlockKind kind = BlockKind::Paragraph) {
    std::string t = buf_.text;
    while (!t.empty() && t.back() == ' ') t.pop_back();
    if (!text::trim(t).empty()) {
      Block b;
      b.kind = kind;
      const std::size_t lead = t.find_first_not_of(' ');
      b.text = t.substr(lead);
      b.span = SourceSpan{0, buf_.src_begin == std::string::npos ? 0 : buf_.src_begin, buf_.src_end};
      const std::size_t block_index = doc_.blocks.size();
      doc_.blocks.push_back(std::move(b));
      for (auto& a : pending_anchors_) {
        a.block = block_index;
        a.offset -= std::min(a.offset, lead);
        doc_.anchors.push_back(std::move(a));
      }
    } else {
      for (auto& a : pending_anchors_) {
        doc_.warnings.push_back("citation outside any text block dropped: " + a.occurrence_id);
      }
    }
    pending_anchors_.clear();
    buf_ = Buffer{};
    for (auto& fn : pending_footnotes_) doc_.blocks.push_back(std::move(fn));
    pending_footnotes_.clear();
  }

  void add_block(BlockKind kind, std::string text, std::size_t begin, std::size_t end, int level = 0) {
    Block b;
    b.kind = kind;
    b.level = level;
    b.text = std::move(text);
    b.span = SourceSpan{0, begin, end};
    doc_.blocks.push_back(std::move(b));
  }

  // Renders [begin, end) inline into a fresh buffer (for headings, captions, bib items).
  void render_inline_to(Buffer& target, std::size_t begin, std::size_t end) {
    std::swap(buf_, target);
    auto anchors = std::move(pending_anchors_);
    pending_anchors_.clear();
    flow(begin, end, /*inline_only=*/true);
    std::swap(buf_, target);
    // Citations inside headings/captions keep their anchors on the enclosing block.
    for (auto& a : pending_anchors_) inline_anchors_.push_back(std::move(a));
    pending_anchors_ = std::move(anchors);
  }

  void attach_inline_anchors(std::size_t offset_shift) {
    const std::size_t block_index = doc_.blocks.size() - 1;
    for (auto& a : inline_anchors_) {
      a.block = block_index;
      a.offset += offset_shift;
      doc_.anchors.push_back(std::move(a));
    }
    inline_anchors_.clear();
  }

  // ---- the main scanner ----
  void flow(std::size_t begin, std::size_t end, bool inline_only = false) {
    std::size_t i = begin;
    while (i < end) {
      const char c = src_[i];
      if (c == '\\') {
        i = macro(i, end, inline_only);
        continue;
      }
      if (c == '{') {
        const std::size_t close = find_matching(i, '{', '}');
        flow(i + 1, close, inline_only);
        i = close + 1;
        continue;
      }
      if (c == '}') fail_at(raw_, i, "unbalanced '}'");
      if (c == '$') {
        i = math(i, end, inline_only);
        continue;
      }
      if (c == '\n') {
        std::size_t j = i + 1;
        while (j < end && (src_[j] == ' ' || src_[j] == '\t' || src_[j] == '\r')) ++j;
        if (j < end && src_[j] == '\n' && !inline_only) {
          flush_paragraph();
          i = j + 1;
          continue;
        }
        buf_.put_char(' ');
        ++i;
        continue;
      }
      if (c == '~') {
        buf_.put_char(' ');
        ++i;
        continue;
      }
      if (c == '-') {
        if (src_.compare(i, 3, "---") == 0) {
          put("—", i);
          i += 3;
        } else if (src_.compare(i, 2, "--") == 0) {
          put("–", i);
          i += 2;
        } else {
          put("-", i);
          ++i;
        }
        continue;
      }
      if (c == '`' && i + 1 < end && src_[i + 1] == '`') {
        put("“", i);
        i += 2;
        continue;
      }
      if (c == '\'' && i + 1 < end && src_[i + 1] == '\'') {
        put("”", i);
        i += 2;
        continue;
      }
      if (c == '&' && in_tabular_ > 0) {
        put(" | ", i);
        ++i;
        continue;
      }
      if (!std::isspace(static_cast<unsigned char>(c))) buf_.touch(i);
      buf_.put_char(c);
      ++i;
    }
  }

  void put(std::string_view s, std::size_t pos) {
    buf_.touch(pos);
    buf_.put(s);
  }

  std::size_t math(std::size_t i, std::size_t end, bool inline_only) {
    if (src_.compare(i, 2, "$$") == 0) {
      const auto close = src_.find("$$", i + 2);
      if (close == std::string::npos || close >= end) fail_at(raw_, i, "unterminated $$ display math");
      const std::string body = text::collapse_whitespace(src_.substr(i + 2, close - i - 2));
      if (inline_only) {
        put("$" + body + "$", i);
      } else {
        flush_paragraph();
        add_block(BlockKind::DisplayMath, "$$ " + body + " $$", i, close + 2);
      }
      return close + 2;
    }
    std::size_t j = i + 1;
    while (j < end && src_[j] != '$') {
      if (src_[j] == '\\') ++j;
      ++j;
    }
    if (j >= end) fail_at(raw_, i, "unterminated $ inline math");
    put("$" + text::collapse_whitespace(src_.substr(i + 1, j - i - 1)) + "$", i);
    return j + 1;
  }

  std::size_t macro(std::size_t i, std::size_t end, bool inline_only) {
    std::size_t p = i + 1;
    if (p >= end) {
      ++i;
      return i;
    }
    const std::string name = read_macro_name(p);

    // Control symbols.
    if (name.size() == 1 && !std::isalpha(static_cast<unsigned char>(name[0]))) {
      const char s = name[0];
      if (s == '\\') {
        if (in_tabular_ > 0) {
          put(" ; ", i);
        } else {
          buf_.put_char(' ');
        }
        if (p < end && src_[p] == '*') ++p;
        read_optional(p);
        return p;
      }
      if (s == '[') {
        const auto close = src_.find("\\]", p);
        if (close == std::string::npos || close >= end) fail_at(raw_, i, "unterminated \\[ display math");
        const std::string body = text::collapse_whitespace(src_.substr(p, close - p));
        if (inline_only) {
          put("$" + body + "$", i);
        } else {
          flush_paragraph();
          add_block(BlockKind::DisplayMath, "$$ " + body + " $$", i, close + 2);
        }
        return close + 2;
      }
      if (s == '(') {
        const auto close = src_.find("\\)", p);
        if (close == std::string::npos || close >= end) fail_at(raw_, i, "unterminated \\( inline math");
        put("$" + text::collapse_whitespace(src_.substr(p, close - p)) + "$", i);
        return close + 2;
      }
      if (s == '&' || s == '%' || s == '$' || s == '#' || s == '_' || s == '{' || s == '}') {
        put(std::string(1, s), i);
        return p;
      }
      if (s == ',' || s == ';' || s == ' ' || s == '!' || s == '/' || s == '-' || s == '@') {
        if (s == ',' || s == ' ' || s == ';') buf_.put_char(' ');
        return p;
      }
      if (s == '\'' || s == '`' || s == '^' || s == '"' || s == '~' || s == '=' || s == '.') {
        // Accent on the next letter, braced or bare.
        std::string letter;
        if (p < end && src_[p] == '{') {
          const std::size_t close = find_matching(p, '{', '}');
          letter = src_.substr(p + 1, close - p - 1);
          p = close + 1;
        } else if (p < end) {
          letter = std::string(1, src_[p]);
          ++p;
        }
        auto it = accent_table().find(std::string(1, s) + letter);
        put(it != accent_table().end() ? it->second : letter, i);
        return p;
      }
      put(std::string(1, s), i);
      return p;
    }

    if (name == "begin") return environment(i, p, end, inline_only);
    if (name == "end") fail_at(raw_, i, "unexpected \\end");

    if (auto lvl = section_levels().find(name.back() == '*' ? name.substr(0, name.size() - 1) : name);
        lvl != section_levels().end()) {
      read_optional(p);
      auto g = read_group(p);
      if (!g) fail_at(raw_, i, "\\" + name + " without a title");
      if (inline_only) {
        flow(g->first, g->second, true);
        return p;
      }
      flush_paragraph();
      Buffer title;
      render_inline_to(title, g->first, g->second);
      add_block(BlockKind::Heading, text::trim(title.text), i, p, lvl->second);
      attach_inline_anchors(0);
      return p;
    }

    if (citation_commands().count(name.back() == '*' ? name.substr(0, name.size() - 1) : name)) {
      read_optional(p);
      read_optional(p);
      auto g = read_group(p);
      if (!g) fail_at(raw_, i, "\\" + name + " without keys");
      std::vector<std::string> keys;
      for (auto k : text::split(group_text(*g), ',')) {
        k = text::trim(k);
        if (!k.empty()) keys.push_back(k);
      }
      std::string cmd = text::to_lower(name);
      if (!cmd.empty() && cmd.back() == '*') cmd.pop_back();
      if (cmd == "citealt") cmd = "citealp";
      if (cmd == "autocite") cmd = "parencite";
      Anchor a;
      a.occurrence_id = cites_.next_occurrence();
      a.keys = keys;
      a.surface = cites_.render(cmd, keys, a.unresolved);
      // A space before a bracketed numeric marker reads naturally: "as shown [1]".
      buf_.touch(i);
      a.offset = buf_.text.size();
      buf_.put(a.surface);
      pending_anchors_.push_back(std::move(a));
      return p;
    }

    if (reference_commands().count(name)) {
      auto g = read_group(p);
      if (!g) fail_at(raw_, i, "\\" + name + " without a label");
      put("\\" + name + "{" + group_text(*g) + "}", i);
      return p;
    }

    if (name == "emph" || name == "textit" || name == "textsl") return wrapped(i, p, "*", inline_only);
    if (name == "textbf") return wrapped(i, p, "**", inline_only);
    if (name == "texttt") return wrapped(i, p, "`", inline_only);
    if (transparent_macros().count(name)) {
      auto g = read_group(p);
      if (g) flow(g->first, g->second, true);
      return p;
    }
    if (name == "url") {
      auto g = read_group(p);
      if (g) put(group_text(*g), i);
      return p;
    }
    if (name == "href") {
      read_group(p);
      auto g = read_group(p);
      if (g) flow(g->first, g->second, true);
      return p;
    }
    if (name == "footnote") {
      auto g = read_group(p);
      if (!g) fail_at(raw_, i, "\\footnote without text");
      const int n = ++footnote_counter_;
      put("[^" + std::to_string(n) + "]", i);
      Buffer fn;
      render_inline_to(fn, g->first, g->second);
      Block b;
      b.kind = BlockKind::Footnote;
      b.key = std::to_string(n);
      b.text = text::trim(fn.text);
      b.span = SourceSpan{0, i, p};
      // Anchors inside footnote text are re-homed when the footnote block is emitted.
      for (auto& a : inline_anchors_) doc_.warnings.push_back("citation inside footnote kept on its paragraph: " + a.occurrence_id);
      for (auto& a : inline_anchors_) pending_anchors_.push_back(std::move(a));
      inline_anchors_.clear();
      pending_footnotes_.push_back(std::move(b));
      return p;
    }
    if (name == "item") {
      if (in_list_ > 0 && !inline_only) {
        flush_paragraph(BlockKind::ListItem);
        if (auto label = read_optional(p)) put(text::trim(*label) + " ", i);
      }
      return p;
    }
    if (name == "caption") {
      read_optional(p);
      auto g = read_group(p);
      if (g) {
        Buffer cap;
        render_inline_to(cap, g->first, g->second);
        pending_caption_ = text::trim(cap.text);
        pending_caption_anchors_ = std::move(inline_anchors_);
        inline_anchors_.clear();
        caption_pos_ = {i, p};
      }
      return p;
    }
    if (name == "par") {
      if (!inline_only) flush_paragraph();
      return p;
    }
    if (name == "bibliography") {
      read_group(p);
      return p;
    }
    if (name == "ldots" || name == "dots") {
      put("…", i);
      return p;
    }
    if (name == "LaTeX" || name == "TeX") {
      put(name, i);
      return p;
    }
    if (name == "S") {
      put("§", i);
      return p;
    }
    if (name == "ss") {
      put("ß", i);
      return p;
    }
    if (name == "textquotedblleft") {
      put("“", i);
      return p;
    }
    if (name == "textquotedblright") {
      put("”", i);
      return p;
    }
    if (name == "textendash") {
      put("–", i);
      return p;
    }
    if (name == "textemdash") {
      put("—", i);
      return p;
    }
    if (name == "c" || name == "v" || name == "u" || name == "H") {
      auto g = read_group(p);
      std::string letter = g ? group_text(*g) : "";
      auto it = accent_table().find(name + letter);
      put(it != accent_table().end() ? it->second : letter, i);
      return p;
    }
    if (auto d = dropped_macros().find(name); d != dropped_macros().end()) {
      read_optional(p);
      for (int k = 0; k < d->second; ++k) {
        if (!read_group(p)) break;
      }
      return p;
    }
    if (presentational_macros().count(name)) {
      // Swallow an empty "{}" that often terminates a control word.
      std::size_t q = p;
      if (q + 1 < end && src_[q] == '{' && src_[q + 1] == '}') p = q + 2;
      return p;
    }

    // Unknown macro: keep verbatim with its braced arguments.
    std::size_t q = p;
    while (q < end && src_[q] == '{') {
      q = find_matching(q, '{', '}') + 1;
    }
    const auto [l, c] = line_col(raw_, i);
    doc_.warnings.push_back("unknown macro \\" + name + " at " + std::to_string(l) + ":" + std::to_string(c));
    put(src_.substr(i, q - i), i);
    return q;
  }

  std::size_t wrapped(std::size_t i, std::size_t p, const std::string& mark, bool inline_only) {
    auto g = read_group(p);
    if (!g) fail_at(raw_, i, "macro without argument");
    put(mark, i);
    flow(g->first, g->second, true);
    (void)inline_only;
    // Remove a trailing space inside the emphasis.
    if (!buf_.text.empty() && buf_.text.back() == ' ') buf_.text.pop_back();
    buf_.put(mark);
    return p;
  }

  std::size_t environment(std::size_t i, std::size_t p, std::size_t end, bool inline_only) {
    auto g = read_group(p);
    if (!g) fail_at(raw_, i, "\\begin without environment name");
    const std::string env = group_text(*g);
    const std::string close_tag = "\\end{" + env + "}";
    // Nested environments of the same name.
    std::size_t depth = 1;
    std::size_t scan = p;
    std::size_t close = std::string::npos;
    const std::string open_tag = "\\begin{" + env + "}";
    while (scan < end) {
      const auto next_open = src_.find(open_tag, scan);
      const auto next_close = src_.find(close_tag, scan);
      if (next_close == std::string::npos || next_close >= end) break;
      if (next_open != std::string::npos && next_open < next_close) {
        ++depth;
        scan = next_open + open_tag.size();
        continue;
      }
      if (--depth == 0) {
        close = next_close;
        break;
      }
      scan = next_close + close_tag.size();
    }
    if (close == std::string::npos) fail_at(raw_, i, "unclosed environment '" + env + "'");
    const std::size_t after = close + close_tag.size();

    if (env == "thebibliography") return after;  // rendered in emit_bibliography
    if (env == "document") {
      flow(p, close, inline_only);
      return after;
    }
    if (display_envs().count(env)) {
      if (env == "math") {
        put("$" + text::collapse_whitespace(src_.substr(p, close - p)) + "$", i);
        return after;
      }
      flush_paragraph();
      const bool numbered = env.back() != '*' && env != "displaymath";
      const bool multi_row = env.rfind("align", 0) == 0 || env.rfind("gather", 0) == 0 ||
                             env.rfind("eqnarray", 0) == 0 || env.rfind("flalign", 0) == 0 ||
                             env.rfind("alignat", 0) == 0;
      std::vector<std::string> rows;
      std::string body = src_.substr(p, close - p);
      if (env.rfind("alignat", 0) == 0) {
        // Drop the column-count argument.
        const auto b = body.find('{');
        const auto e = body.find('}');
        if (b != std::string::npos && e != std::string::npos && text::trim(body.substr(0, b)).empty()) body = body.substr(e + 1);
      }
      if (multi_row) {
        std::size_t start = 0;
        int d = 0;
        for (std::size_t k = 0; k < body.size(); ++k) {
          if (body[k] == '{') ++d;
          if (body[k] == '}') --d;
          if (d == 0 && body.compare(k, 2, "\\\\") == 0) {
            rows.push_back(body.substr(start, k - start));
            start = k + 2;
            ++k;
          }
        }
        rows.push_back(body.substr(start));
      } else {
        rows.push_back(body);
      }
      for (auto& row : rows) {
        static const std::regex kLabel(R"(\\label\{[^}]*\})");
        row = std::regex_replace(row, kLabel, "");
        bool row_numbered = numbered;
        for (const char* no : {"\\nonumber", "\\notag"}) {
          if (row.find(no) != std::string::npos) {
            row_numbered = false;
            row = text::replace_all(row, no, "");
          }
        }
        row = text::collapse_whitespace(row);
        if (row.empty()) continue;
        std::string t = "$$ " + row;
        if (row_numbered) t += " \\tag{" + std::to_string(++equation_counter_) + "}";
        t += " $$";
        add_block(BlockKind::DisplayMath, t, i, after);
      }
      return after;
    }
    if (env == "itemize" || env == "enumerate" || env == "description") {
      if (!inline_only) flush_paragraph();
      ++in_list_;
      flow(p, close, inline_only);
      if (!inline_only) flush_paragraph(BlockKind::ListItem);
      --in_list_;
      return after;
    }
    if (env.rfind("figure", 0) == 0 || env.rfind("table", 0) == 0 || env == "wrapfigure") {
      if (!inline_only) flush_paragraph();
      const bool is_table = env.rfind("table", 0) == 0;
      pending_caption_.reset();
      // Only the caption survives; float bodies are graphics or tables.
      Buffer discard;
      std::swap(buf_, discard);
      auto saved_anchors = std::move(pending_anchors_);
      pending_anchors_.clear();
      ++in_tabular_;
      flow(p, close, true);
      --in_tabular_;
      std::swap(buf_, discard);
      pending_anchors_ = std::move(saved_anchors);
      if (pending_caption_) {
        const int n = is_table ? ++table_counter_ : ++figure_counter_;
        const std::string prefix = (is_table ? "Table " : "Figure ") + std::to_string(n) + ": ";
        add_block(BlockKind::Caption, prefix + *pending_caption_, caption_pos_.first, caption_pos_.second);
        inline_anchors_ = std::move(pending_caption_anchors_);
        pending_caption_anchors_.clear();
        attach_inline_anchors(prefix.size());
      }
      pending_caption_.reset();
      return after;
    }
    if (env == "abstract") {
      if (!inline_only) {
        flush_paragraph();
        add_block(BlockKind::Heading, "Abstract", i, p, 1);
      }
      flow(p, close, inline_only);
      if (!inline_only) flush_paragraph();
      return after;
    }
    if (env == "tabular" || env == "tabular*" || env == "tabularx") {
      read_group(p);
      ++in_tabular_;
      flow(p, close, true);
      --in_tabular_;
      return after;
    }
    if (env == "verbatim" || env == "lstlisting" || env == "comment") {
      if (env != "comment") {
        flush_paragraph();
        add_block(BlockKind::Paragraph, text::trim(src_.substr(p, close - p)), p, close);
      }
      return after;
    }
    static const std::set<std::string> kTransparent = {"center", "flushleft", "flushright", "quote", "quotation",
                                                       "minipage", "small", "footnotesize", "theorem", "lemma",
                                                       "proof", "definition", "proposition", "corollary", "remark",
                                                       "example", "frame", "multicols", "spacing", "adjustbox"};
    if (!kTransparent.count(env)) {
      const auto [l, c] = line_col(raw_, i);
      doc_.warnings.push_back("unknown environment '" + env + "' at " + std::to_string(l) + ":" + std::to_string(c));
    }
    if (env == "minipage") read_optional(p), read_group(p);
    flow(p, close, inline_only);
    return after;
  }

  std::string raw_;
  std::string src_;
  StyleConfig style_;
  ParsedDocument doc_;
  CitationRenderer cites_;
  std::size_t body_begin_ = 0;
  std::size_t body_end_ = 0;
  std::size_t bib_env_begin_ = std::string::npos;
  std::size_t bib_env_end_ = std::string::npos;
  std::vector<std::pair<std::size_t, std::size_t>> bib_spans_;

  Buffer buf_;
  std::vector<Anchor> pending_anchors_;
  std::vector<Anchor> inline_anchors_;
  std::vector<Block> pending_footnotes_;
  std::optional<std::string> pending_caption_;
  std::vector<Anchor> pending_caption_anchors_;
  std::pair<std::size_t, std::size_t> caption_pos_{0, 0};
  int in_list_ = 0;
  int in_tabular_ = 0;
  int equation_counter_ = 0;
  int figure_counter_ = 0;
  int table_counter_ = 0;
  int footnote_counter_ = 0;
};

// ---- XML / HTML ---------------------------------------------------------------------

struct XmlNode {
  std::string name;  // lowercased; empty for text nodes
  std::map<std::string, std::string> attrs;
  std::vector<std::unique_ptr<XmlNode>> children;
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::string attr(const std::string& k) const {
    auto it = attrs.find(k);
    return it == attrs.end() ? "" : it->second;
  }
  const XmlNode* child(const std::string& n) const {
    for (const auto& c : children) {
      if (c->name == n) return c.get();
    }
    return nullptr;
  }
  void find_all(const std::string& n, std::vector<const XmlNode*>& out) const {
    for (const auto& c : children) {
      if (c->name == n) out.push_back(c.get());
      c->find_all(n, out);
    }
  }
};

std::string decode_entities(const std::string& s) {
  static const std::map<std::string, std::string> kNamed = {
      {"amp", "&"},    {"lt", "<"},      {"gt", ">"},   {"quot", "\""}, {"apos", "'"},   {"nbsp", " "},
      {"ndash", "–"}, {"mdash", "—"},  {"hellip", "…"}, {"lsquo", "‘"}, {"rsquo", "’"}, {"ldquo", "“"},
      {"rdquo", "”"}, {"eacute", "é"}, {"uuml", "ü"},  {"ouml", "ö"},  {"auml", "ä"},   {"times", "×"},
      {"minus", "−"}, {"le", "≤"},     {"ge", "≥"},    {"alpha", "α"}, {"beta", "β"},   {"plusmn", "±"}};
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    const std::string ent = s.substr(i + 1, semi - i - 1);
    std::string rep;
    if (!ent.empty() && ent[0] == '#') {
      unsigned long cp = 0;
      try {
        cp = (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X')) ? std::stoul(ent.substr(2), nullptr, 16)
                                                                  : std::stoul(ent.substr(1));
      } catch (const std::exception&) {
        out.push_back('&');
        continue;
      }
      if (cp < 0x80) {
        rep.push_back(static_cast<char>(cp));
      } else if (cp < 0x800) {
        rep.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        rep.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
      } else if (cp < 0x10000) {
        rep.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        rep.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        rep.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
      } else {
        rep.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        rep.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        rep.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        rep.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
      }
    } else {
      auto it = kNamed.find(ent);
      if (it == kNamed.end()) {
        out.push_back('&');
        continue;
      }
      rep = it->second;
    }
    out += rep;
    i = semi;
  }
  return out;
}

class XmlParser {
 public:
  explicit XmlParser(const std::string& src) : src_(src) {}

  std::unique_ptr<XmlNode> parse() {
    auto root = std::make_unique<XmlNode>();
    root->name = "#root";
    std::vector<XmlNode*> stack{root.get()};
    std::size_t i = 0;
    static const std::set<std::string> kVoid = {"br", "img", "hr", "meta", "link", "input", "col", "area", "base", "wbr", "source"};
    while (i < src_.size()) {
      if (src_[i] != '<') {
        const auto next = src_.find('<', i);
        const std::size_t stop = next == std::string::npos ? src_.size() : next;
        auto t = std::make_unique<XmlNode>();
        t->text = decode_entities(src_.substr(i, stop - i));
        t->begin = i;
        t->end = stop;
        stack.back()->children.push_back(std::move(t));
        i = stop;
        continue;
      }
      if (src_.compare(i, 4, "<!--") == 0) {
        const auto e = src_.find("-->", i);
        if (e == std::string::npos) fail_at(src_, i, "unterminated comment");
        i = e + 3;
        continue;
      }
      if (src_.compare(i, 9, "<![CDATA[") == 0) {
        const auto e = src_.find("]]>", i);
        if (e == std::string::npos) fail_at(src_, i, "unterminated CDATA");
        auto t = std::make_unique<XmlNode>();
        t->text = src_.substr(i + 9, e - i - 9);
        t->begin = i;
        t->end = e + 3;
        stack.back()->children.push_back(std::move(t));
        i = e + 3;
        continue;
      }
      if (src_.compare(i, 2, "<?") == 0 || src_.compare(i, 2, "<!") == 0) {
        const auto e = src_.find('>', i);
        if (e == std::string::npos) fail_at(src_, i, "unterminated declaration");
        i = e + 1;
        continue;
      }
      const auto close = find_tag_end(i);
      std::string tag = src_.substr(i + 1, close - i - 1);
      if (!tag.empty() && tag[0] == '/') {
        const std::string name = text::to_lower(text::trim(tag.substr(1)));
        if (stack.size() <= 1) fail_at(src_, i, "closing tag </" + name + "> without an open element");
        if (stack.back()->name != name) {
          fail_at(src_, i, "closing tag </" + name + "> does not match <" + stack.back()->name + ">");
        }
        stack.back()->end = close + 1;
        stack.pop_back();
        i = close + 1;
        continue;
      }
      bool self_close = !tag.empty() && tag.back() == '/';
      if (self_close) tag.pop_back();
      auto node = std::make_unique<XmlNode>();
      std::size_t k = 0;
      while (k < tag.size() && !std::isspace(static_cast<unsigned char>(tag[k]))) ++k;
      node->name = text::to_lower(tag.substr(0, k));
      parse_attrs(tag.substr(k), *node);
      node->begin = i;
      node->end = close + 1;
      XmlNode* raw = node.get();
      stack.back()->children.push_back(std::move(node));
      i = close + 1;
      if (self_close || kVoid.count(raw->name)) continue;
      if (raw->name == "script" || raw->name == "style") {
        const auto e = src_.find("</" + raw->name, i);
        if (e == std::string::npos) fail_at(src_, raw->begin, "unclosed <" + raw->name + ">");
        i = src_.find('>', e) + 1;
        continue;
      }
      stack.push_back(raw);
    }
    if (stack.size() > 1) fail_at(src_, stack.back()->begin, "unclosed element <" + stack.back()->name + ">");
    return root;
  }

 private:
  std::size_t find_tag_end(std::size_t i) const {
    char quote = 0;
    for (std::size_t k = i + 1; k < src_.size(); ++k) {
      if (quote) {
        if (src_[k] == quote) quote = 0;
        continue;
      }
      if (src_[k] == '"' || src_[k] == '\'') quote = src_[k];
      if (src_[k] == '>') return k;
      if (src_[k] == '<') break;
    }
    fail_at(src_, i, "unterminated tag");
  }

  static void parse_attrs(const std::string& s, XmlNode& node) {
    static const std::regex kAttr(R"re(([A-Za-z_:][-A-Za-z0-9_:.]*)\s*(?:=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'>]+)))?)re");
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kAttr); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      std::string v = m[2].matched ? m[2].str() : m[3].matched ? m[3].str() : m[4].str();
      node.attrs[text::to_lower(m[1].str())] = decode_entities(v);
    }
  }

  const std::string& src_;
};

class XmlConverter {
 public:
  XmlConverter(const std::string& source, const StyleConfig& style, const std::string& doc_id)
      : src_(source), style_(style) {
    doc_.doc_id = doc_id;
    doc_.origin = DocOrigin::Markup;
    doc_.style = style.style;
    cites_.style = &style_;
    cites_.doc_id = doc_id;
  }

  ParsedDocument run() {
    XmlParser parser(src_);
    root_ = parser.parse();
    collect_refs(*root_);
    int index = 0;
    for (auto& e : doc_.bibliography) e.entry_index = ++index;
    for (const auto& e : doc_.bibliography) cites_.by_key.emplace(e.key, &e);
    walk(*root_, 0);
    flush(BlockKind::Paragraph);
    if (!doc_.bibliography.empty()) {
      Block h;
      h.kind = BlockKind::Heading;
      h.level = 1;
      h.text = "References";
      h.span = SourceSpan{0, ref_list_begin_, ref_list_begin_};
      doc_.blocks.push_back(h);
      for (std::size_t k = 0; k < doc_.bibliography.size(); ++k) {
        const auto& e = doc_.bibliography[k];
        Block b;
        b.kind = BlockKind::BibEntry;
        b.key = e.key;
        b.text = (style_.style == CitationStyle::AuthorYear ? "" : "[" + std::to_string(e.entry_index) + "] ") + e.raw;
        b.span = SourceSpan{0, ref_spans_[k].first, ref_spans_[k].second};
        doc_.blocks.push_back(b);
      }
    }
    for (auto& fn : footnotes_) doc_.blocks.push_back(std::move(fn));
    doc_.index_sentences();
    return std::move(doc_);
  }

 private:
  static std::string plain(const XmlNode& n) {
    if (n.name.empty()) return n.text;
    std::string out;
    for (const auto& c : n.children) out += plain(*c);
    return out;
  }

  static bool is_ref_container(const XmlNode& n) {
    if (n.name == "ref-list") return true;
    const std::string cls = " " + n.attr("class") + " ";
    return (n.name == "ol" || n.name == "ul" || n.name == "section" || n.name == "div") &&
           (cls.find(" references ") != std::string::npos || cls.find(" bibliography ") != std::string::npos);
  }

  void collect_refs(const XmlNode& n) {
    if (is_ref_container(n)) {
      if (ref_list_begin_ == 0) ref_list_begin_ = n.begin;
      for (const auto& c : n.children) {
        if (c->name == "ref" || c->name == "li" || (c->name == "div" && c->attr("class") == "ref") || c->name == "p") {
          if (c->attr("id").empty()) continue;
          doc_.bibliography.push_back(ref_entry(*c));
          ref_spans_.emplace_back(c->begin, c->end);
        }
      }
      return;
    }
    for (const auto& c : n.children) collect_refs(*c);
  }

  BibEntry ref_entry(const XmlNode& ref) const {
    const std::string raw = text::collapse_whitespace(plain(ref));
    std::vector<const XmlNode*> names;
    ref.find_all("name", names);
    std::vector<const XmlNode*> titles;
    ref.find_all("article-title", titles);
    if (names.empty() && titles.empty()) {
      BibEntry e = parse_reference_string(raw, 0);
      e.key = ref.attr("id");
      return e;
    }
    BibEntry e;
    e.key = ref.attr("id");
    for (const auto* nm : names) {
      Author a;
      if (const auto* s = nm->child("surname")) a.family = text::trim(plain(*s));
      if (const auto* g = nm->child("given-names")) {
        const std::string given = text::trim(plain(*g));
        for (const auto& part : text::split_whitespace(given)) a.initials += std::string(1, part[0]) + ".";
      }
      if (!a.family.empty()) e.authors.push_back(a);
    }
    std::vector<const XmlNode*> found;
    ref.find_all("year", found);
    if (!found.empty()) {
      try {
        e.year = std::stoi(text::trim(plain(*found[0])));
      } catch (const std::exception&) {
      }
    }
    if (!titles.empty()) e.title = text::collapse_whitespace(plain(*titles[0]));
    e.title_tokens = text::title_tokens(e.title);
    found.clear();
    ref.find_all("source", found);
    if (!found.empty()) e.venue = text::collapse_whitespace(plain(*found[0]));
    found.clear();
    ref.find_all("pub-id", found);
    for (const auto* id : found) {
      const std::string type = id->attr("pub-id-type");
      if (type == "doi") e.doi = text::trim(plain(*id));
      if (type == "arxiv") e.arxiv = text::trim(plain(*id));
    }
    e.raw = raw;
    return e;
  }

  // ---- walking ----
  void flush(BlockKind kind) {
    std::string t = buf_.text;
    while (!t.empty() && t.back() == ' ') t.pop_back();
    const std::size_t lead = t.find_first_not_of(' ');
    if (lead != std::string::npos) {
      Block b;
      b.kind = kind;
      b.level = pending_level_;
      b.text = t.substr(lead);
      b.span = SourceSpan{0, buf_.src_begin == std::string::npos ? 0 : buf_.src_begin, buf_.src_end};
      const std::size_t idx = doc_.blocks.size();
      doc_.blocks.push_back(std::move(b));
      for (auto& a : pending_) {
        a.block = idx;
        a.offset -= std::min(a.offset, lead);
        doc_.anchors.push_back(std::move(a));
      }
    }
    pending_.clear();
    buf_ = Buffer{};
    pending_level_ = 0;
  }

  void inline_walk(const XmlNode& n) {
    if (n.name.empty()) {
      buf_.touch(n.begin);
      buf_.put(n.text);
      return;
    }
    const std::string& nm = n.name;
    if (nm == "xref" || nm == "cite") {
      const std::string type = n.attr("ref-type");
      if (nm == "xref" && type == "fn") {
        buf_.put("[^" + text::trim(plain(n)) + "]");
        return;
      }
      if (nm == "xref" && type != "bibr") {
        for (const auto& c : n.children) inline_walk(*c);
        return;
      }
      std::string ids = nm == "cite" ? n.attr("data-keys") : n.attr("rid");
      ids = text::replace_all(ids, ",", " ");
      Anchor a;
      a.occurrence_id = cites_.next_occurrence();
      a.keys = text::split_whitespace(ids);
      const std::string cmd = n.attr("data-form") == "narrative" ? "citet" : "citep";
      a.surface = cites_.render(style_.style == CitationStyle::AuthorYear ? cmd : "citep", a.keys, a.unresolved);
      buf_.touch(n.begin);
      a.offset = buf_.text.size();
      buf_.put(a.surface);
      pending_.push_back(std::move(a));
      return;
    }
    if (nm == "italic" || nm == "em" || nm == "i") {
      buf_.put("*");
      for (const auto& c : n.children) inline_walk(*c);
      if (!buf_.text.empty() && buf_.text.back() == ' ') buf_.text.pop_back();
      buf_.put("*");
      return;
    }
    if (nm == "bold" || nm == "strong" || nm == "b") {
      buf_.put("**");
      for (const auto& c : n.children) inline_walk(*c);
      if (!buf_.text.empty() && buf_.text.back() == ' ') buf_.text.pop_back();
      buf_.put("**");
      return;
    }
    if (nm == "inline-formula" || (nm == "span" && n.attr("class") == "math")) {
      std::vector<const XmlNode*> tex;
      n.find_all("tex-math", tex);
      buf_.put("$" + text::collapse_whitespace(tex.empty() ? plain(n) : plain(*tex[0])) + "$");
      return;
    }
    if (nm == "sup" || nm == "sub") {
      buf_.put(nm == "sup" ? "^" : "_");
      for (const auto& c : n.children) inline_walk(*c);
      return;
    }
    if (nm == "fn") {
      add_footnote(n);
      return;
    }
    static const std::set<std::string> kKnownInline = {"span", "a", "u", "sc", "monospace", "code", "uri", "ext-link",
                                                       "named-content", "styled-content", "small", "abbr", "label", "tex-math", "mml:math", "math", "br"};
    if (!kKnownInline.count(nm)) unknown(n);
    for (const auto& c : n.children) inline_walk(*c);
  }

  void add_footnote(const XmlNode& n) {
    Block b;
    b.kind = BlockKind::Footnote;
    b.key = n.attr("id");
    std::string body;
    for (const auto& c : n.children) {
      if (c->name != "label") body += plain(*c);
    }
    b.text = text::collapse_whitespace(body);
    b.span = SourceSpan{0, n.begin, n.end};
    footnotes_.push_back(std::move(b));
  }

  void unknown(const XmlNode& n) {
    if (warned_.insert(n.name).second) {
      const auto [l, c] = line_col(src_, n.begin);
      doc_.warnings.push_back("unknown element <" + n.name + "> at " + std::to_string(l) + ":" + std::to_string(c));
    }
  }

  void walk(const XmlNode& n, int depth) {
    static const std::set<std::string> kSkip = {"head", "script", "style", "journal-meta", "article-meta-skip", "nav",
                                                "footer", "header", "ref-list", "back-matter-skip", "table", "graphic",
                                                "permissions", "contrib-group", "aff", "author-notes", "pub-date",
                                                "kwd-group", "history", "funding-group", "ack-skip"};
    const std::string& nm = n.name;
    if (nm.empty()) {
      if (!text::trim(n.text).empty()) {
        buf_.touch(n.begin);
        buf_.put(n.text);
      }
      return;
    }
    if (kSkip.count(nm) || is_ref_container(n)) return;
    if (nm == "fn-group") {
      for (const auto& c : n.children) {
        if (c->name == "fn") add_footnote(*c);
      }
      return;
    }
    if (nm == "sec" || nm == "section" || nm == "article" || nm == "body" || nm == "html" || nm == "#root" ||
        nm == "back" || nm == "front" || nm == "article-meta" || nm == "main" || nm == "div" || nm == "abstract" ||
        nm == "title-group" || nm == "app" || nm == "app-group" || nm == "ack" || nm == "boxed-text") {
      flush(BlockKind::Paragraph);
      const int inner = (nm == "sec" || nm == "section" || nm == "app") ? depth + 1 : depth;
      if (nm == "abstract") {
        Block h;
        h.kind = BlockKind::Heading;
        h.level = 1;
        h.text = "Abstract";
        h.span = SourceSpan{0, n.begin, n.begin};
        doc_.blocks.push_back(h);
      }
      for (const auto& c : n.children) walk(*c, inner);
      flush(BlockKind::Paragraph);
      return;
    }
    if (nm == "title" || (nm.size() == 2 && nm[0] == 'h' && nm[1] >= '1' && nm[1] <= '6') || nm == "article-title") {
      if (nm == "article-title") return;  // metadata title
      flush(BlockKind::Paragraph);
      for (const auto& c : n.children) inline_walk(*c);
      pending_level_ = nm == "title" ? std::max(1, depth) : nm[1] - '0';
      if (nm == "title" && depth == 0) pending_level_ = 1;
      flush(BlockKind::Heading);
      return;
    }
    if (nm == "p") {
      flush(BlockKind::Paragraph);
      for (const auto& c : n.children) inline_walk(*c);
      flush(BlockKind::Paragraph);
      return;
    }
    if (nm == "list" || nm == "ul" || nm == "ol") {
      flush(BlockKind::Paragraph);
      for (const auto& c : n.children) {
        if (c->name == "list-item" || c->name == "li") {
          for (const auto& cc : c->children) {
            if (cc->name == "p") {
              for (const auto& ccc : cc->children) inline_walk(*ccc);
            } else {
              inline_walk(*cc);
            }
          }
          flush(BlockKind::ListItem);
        }
      }
      return;
    }
    if (nm == "disp-formula" || (nm == "div" && n.attr("class") == "equation")) {
      flush(BlockKind::Paragraph);
      std::vector<const XmlNode*> tex;
      n.find_all("tex-math", tex);
      std::string label;
      if (const auto* l = n.child("label")) label = text::trim(plain(*l));
      std::string body;
      if (!tex.empty()) {
        body = plain(*tex[0]);
      } else {
        for (const auto& c : n.children) {
          if (c->name != "label") body += plain(*c);
        }
      }
      body = text::collapse_whitespace(body);
      label.erase(std::remove_if(label.begin(), label.end(), [](char ch) { return ch == '(' || ch == ')'; }), label.end());
      std::string t = "$$ " + body + (label.empty() ? "" : " \\tag{" + label + "}") + " $$";
      Block b;
      b.kind = BlockKind::DisplayMath;
      b.text = t;
      b.span = SourceSpan{0, n.begin, n.end};
      doc_.blocks.push_back(b);
      return;
    }
    if (nm == "fig" || nm == "table-wrap" || nm == "figure") {
      flush(BlockKind::Paragraph);
      const XmlNode* cap = n.child("caption");
      if (!cap) cap = n.child("figcaption");
      if (!cap) return;
      std::string label;
      if (const auto* l = n.child("label")) label = text::trim(plain(*l));
      const bool is_table = nm == "table-wrap";
      if (label.empty()) {
        const std::string capt = text::trim(plain(*cap));
        const bool has_prefix = capt.rfind("Figure", 0) == 0 || capt.rfind("Table", 0) == 0 ||
                                capt.rfind("Fig.", 0) == 0 || capt.rfind("Tab.", 0) == 0;
        if (!has_prefix) label = (is_table ? "Table " : "Figure ") + std::to_string(is_table ? ++tables_ : ++figures_);
      }
      if (!label.empty()) {
        if (label.back() == '.' || label.back() == ':') label.pop_back();
        buf_.put(label + ": ");
      }
      buf_.touch(cap->begin);
      for (const auto& c : cap->children) {
        if (c->name == "p" || c->name == "title") {
          for (const auto& cc : c->children) inline_walk(*cc);
          buf_.put(" ");
        } else {
          inline_walk(*c);
        }
      }
      flush(BlockKind::Caption);
      return;
    }
    if (nm == "fn") {
      add_footnote(n);
      return;
    }
    // Inline content at block level becomes part of the current paragraph.
    inline_walk(n);
  }

  const std::string& src_;
  StyleConfig style_;
  ParsedDocument doc_;
  CitationRenderer cites_;
  std::unique_ptr<XmlNode> root_;
  Buffer buf_;
  int pending_level_ = 0;
  std::vector<Anchor> pending_;
  std::vector<Block> footnotes_;
  std::vector<std::pair<std::size_t, std::size_t>> ref_spans_;
  std::size_t ref_list_begin_ = 0;
  std::set<std::string> warned_;
  int figures_ = 0;
  int tables_ = 0;
};

MarkupKind sniff(const std::string& source) {
  const std::string head = text::trim(source.substr(0, 2048));
  if (!head.empty() && head[0] == '<') return MarkupKind::Xml;
  return MarkupKind::Latex;
}

}  // namespace

ParsedDocument normalize_markup(const std::string& source, const StyleConfig& style, const std::string& doc_id,
                                MarkupKind kind) {
  if (kind == MarkupKind::Auto) kind = sniff(source);
  if (kind == MarkupKind::Xml) return XmlConverter(source, style, doc_id).run();
  return LatexConverter(source, style, doc_id).run();
}

}  // namespace citecheck::dpcm
