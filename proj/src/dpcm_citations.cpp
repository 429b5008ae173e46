#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "citecheck/dpcm.hpp"
#include "citecheck/errors.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::dpcm {

namespace fs = std::filesystem;

std::vector<int> expand_numeric(const std::string& inner) {
  // Separators between range ends: hyphen, en dash, em dash, double hyphen.
  std::string s = inner;
  s = text::replace_all(s, "--", "-");
  s = text::replace_all(s, "–", "-");
  s = text::replace_all(s, "—", "-");
  s = text::replace_all(s, ";", ",");
  std::vector<int> out;
  static const std::regex kPart(R"(^\s*(\d{1,3})\s*(?:-\s*(\d{1,3}))?\s*$)");
  for (const auto& part : text::split(s, ',')) {
    std::smatch m;
    if (!std::regex_match(part, m, kPart)) return {};
    const int a = std::stoi(m[1].str());
    const int b = m[2].matched ? std::stoi(m[2].str()) : a;
    if (a == 0 || b < a) return {};
    for (int i = a; i <= b; ++i) out.push_back(i);
  }
  return out;
}

namespace {

const std::set<std::string>& particles() {
  static const std::set<std::string> k = {"van", "von", "de", "der", "den", "del", "da", "di", "du", "la", "le", "dos"};
  return k;
}

bool capitalized(const std::string& token) {
  return !token.empty() && (text::is_upper(static_cast<unsigned char>(token[0])) ||
                            static_cast<unsigned char>(token[0]) >= 0x80);
}

// Inline math spans masked with spaces so offsets stay aligned.
std::string mask_math(const std::string& s) {
  std::string out = s;
  bool in = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == '\\' && i + 1 < out.size()) {
      if (in) out[i] = out[i + 1] = ' ';
      ++i;
      continue;
    }
    if (out[i] == '$') {
      in = !in;
      out[i] = ' ';
      continue;
    }
    if (in) out[i] = ' ';
  }
  return out;
}

}  // namespace

std::optional<CitedAuthorYear> parse_author_year(const std::string& part_in) {
  std::string part = text::trim(part_in);
  static const std::regex kPrefix(R"(^(?:see also|see|e\.g\.,?|cf\.|i\.e\.,?|also)\s+)", std::regex::icase);
  part = std::regex_replace(part, kPrefix, "");
  static const std::regex kYear(R"((?:,\s*|\s+)((?:19|20)\d{2})([a-z]?)\s*(?:,\s*(?:pp?\.|ch\.|chap\.|sec\.)\s*\S+)?\s*$)");
  std::smatch m;
  if (!std::regex_search(part, m, kYear)) return std::nullopt;
  CitedAuthorYear out;
  out.year = std::stoi(m[1].str());
  out.year_suffix = m[2].str();
  std::string names = text::trim(part.substr(0, static_cast<std::size_t>(m.position(0))));
  names = text::replace_all(names, " et al.", "");
  names = text::replace_all(names, " et al", "");
  names = text::replace_all(names, " and ", ",");
  names = text::replace_all(names, " & ", ",");
  for (auto name : text::split(names, ',')) {
    name = text::trim(name);
    if (name.empty()) continue;
    const auto tokens = text::split_whitespace(name);
    if (tokens.size() > 4) return std::nullopt;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const bool last = i + 1 == tokens.size();
      if (last ? !capitalized(tokens[i]) : !(capitalized(tokens[i]) || particles().count(tokens[i]))) return std::nullopt;
    }
    const std::string fam = text::normalize_family_name(name);
    if (fam.empty()) return std::nullopt;
    out.families.push_back(fam);
  }
  if (out.families.empty()) return std::nullopt;
  return out;
}

namespace {

// Fraction of cited family names present in the entry's author list.
double name_overlap(const CitedAuthorYear& cite, const BibEntry& entry) {
  std::set<std::string> entry_families;
  for (const auto& a : entry.authors) entry_families.insert(text::normalize_family_name(a.family));
  std::size_t hit = 0;
  for (const auto& f : cite.families) hit += entry_families.count(f);
  return cite.families.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(cite.families.size());
}

}  // namespace

double author_year_score(const CitedAuthorYear& cite, const BibEntry& entry, const std::string& sentence) {
  const double names = name_overlap(cite, entry);
  const double year = (cite.year && entry.year && *cite.year == *entry.year) ? 1.0 : 0.0;
  std::vector<std::string> content;
  for (const auto& t : entry.title_tokens) {
    if (t.size() >= 4) content.push_back(t);
  }
  double title = 0.0;
  if (!content.empty()) {
    const auto words = text::title_tokens(sentence);
    const std::set<std::string> sent(words.begin(), words.end());
    std::size_t found = 0;
    for (const auto& t : content) found += sent.count(t);
    title = static_cast<double>(found) / static_cast<double>(content.size());
  }
  return 0.5 * names + 0.3 * year + 0.2 * title;
}

Detection detect_citations(const ParsedDocument& doc) {
  Detection det;
  std::size_t k = 0;
  auto next_id = [&] { return (doc.doc_id.empty() ? "doc" : doc.doc_id) + "#o" + std::to_string(++k); };

  if (doc.origin == DocOrigin::Markup) {
    for (const auto& a : doc.anchors) {
      CitationEdge e;
      e.occurrence_id = a.occurrence_id;
      e.sentence_index = doc.sentence_at(a.block, a.offset).value_or(0);
      e.surface_text = a.surface;
      e.style = doc.style;
      e.from_anchor = true;
      e.block = a.block;
      e.offset = a.offset;
      for (const auto& key : a.keys) {
        if (std::find(a.unresolved.begin(), a.unresolved.end(), key) != a.unresolved.end()) {
          e.unresolved_markers.push_back(key);
          continue;
        }
        e.target_keys.push_back(key);
        for (const auto& be : doc.bibliography) {
          if (be.key == key) e.indices.push_back(be.entry_index);
        }
      }
      det.drafts.push_back(std::move(e));
    }
    det.dominant_style = doc.style;
    return det;
  }

  // Footnote labels whose definition reads like a reference.
  static const std::regex kRefLike(R"(\b(?:19|20)\d{2}\b|10\.\d{4,9}/)");
  std::set<std::string> reference_footnotes;
  for (const auto& b : doc.blocks) {
    if (b.kind == BlockKind::Footnote && std::regex_search(b.text, kRefLike)) reference_footnotes.insert(b.key);
  }

  static const std::regex kBracket(R"(\[([^\[\]]+)\])");
  static const std::regex kFootnote(R"(\[\^([^\]\s]+)\])");
  static const std::regex kParen(R"(\(([^()]*?(?:19|20)\d{2}[a-z]?[^()]*)\))");
  static const std::regex kNarrative(
      R"(((?:(?:van|von|de|der|den|del|da|di|du|la|le)\s+)*[A-Z][^\s(),;.]*(?:\s+(?:and|&)\s+(?:(?:van|von|de|der|den)\s+)*[A-Z][^\s(),;.]*)?(?:\s+et\s+al\.)?)\s+\(((?:19|20)\d{2}[a-z]?)\))");
  static const std::set<std::string> kNotNames = {"In", "The", "This", "That", "These", "Table", "Figure", "Fig",
                                                  "Section", "Eq", "Equation", "We", "Our", "See", "Since", "As", "At",
                                                  "By", "For", "From", "On", "Of", "To", "A", "An", "And", "Appendix"};

  std::map<CitationStyle, int> counts;
  for (const Sentence& s : doc.sentences) {
    const BlockKind kind = doc.blocks[s.block].kind;
    if (kind != BlockKind::Paragraph && kind != BlockKind::ListItem && kind != BlockKind::Caption) continue;
    const std::string masked = mask_math(s.text);
    struct Hit {
      std::size_t pos;
      CitationEdge edge;
    };
    std::vector<Hit> hits;
    auto base_edge = [&](std::size_t pos, std::string surface, CitationStyle style) {
      CitationEdge e;
      e.sentence_index = s.index;
      e.surface_text = std::move(surface);
      e.style = style;
      e.block = s.block;
      e.offset = s.begin + pos;
      return e;
    };
    // Numeric.
    for (auto it = std::sregex_iterator(masked.begin(), masked.end(), kBracket); it != std::sregex_iterator(); ++it) {
      const auto pos = static_cast<std::size_t>(it->position(0));
      const auto end = pos + static_cast<std::size_t>(it->length(0));
      const std::string inner = (*it)[1].str();
      if (!inner.empty() && inner[0] == '^') continue;
      if (end < masked.size() && masked[end] == '(') continue;  // markdown link text
      const auto indices = expand_numeric(inner);
      if (indices.empty()) continue;
      CitationEdge e = base_edge(pos, s.text.substr(pos, end - pos), CitationStyle::Numeric);
      e.indices = indices;
      hits.push_back({pos, std::move(e)});
    }
    // Footnote markers.
    for (auto it = std::sregex_iterator(masked.begin(), masked.end(), kFootnote); it != std::sregex_iterator(); ++it) {
      const std::string label = (*it)[1].str();
      if (!reference_footnotes.count(label)) continue;
      const auto pos = static_cast<std::size_t>(it->position(0));
      CitationEdge e = base_edge(pos, (*it)[0].str(), CitationStyle::Footnote);
      e.parts = {label};
      hits.push_back({pos, std::move(e)});
    }
    // Parenthetical author-year, one draft per parsable part.
    for (auto it = std::sregex_iterator(masked.begin(), masked.end(), kParen); it != std::sregex_iterator(); ++it) {
      const auto pos = static_cast<std::size_t>(it->position(0));
      const std::string surface = s.text.substr(pos, static_cast<std::size_t>(it->length(0)));
      for (const auto& part : text::split((*it)[1].str(), ';')) {
        if (!parse_author_year(part)) continue;
        CitationEdge e = base_edge(pos, surface, CitationStyle::AuthorYear);
        e.parts = {text::trim(part)};
        hits.push_back({pos, std::move(e)});
      }
    }
    // Narrative author-year.
    for (auto it = std::sregex_iterator(masked.begin(), masked.end(), kNarrative); it != std::sregex_iterator(); ++it) {
      const std::string names = (*it)[1].str();
      const std::string first = text::split_whitespace(names).front();
      if (kNotNames.count(first)) continue;
      const std::string part = names + ", " + (*it)[2].str();
      if (!parse_author_year(part)) continue;
      const auto pos = static_cast<std::size_t>(it->position(0));
      CitationEdge e = base_edge(pos, s.text.substr(pos, static_cast<std::size_t>(it->length(0))), CitationStyle::AuthorYear);
      e.parts = {part};
      e.ambiguity_flag = false;
      hits.push_back({pos, std::move(e)});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
    for (auto& h : hits) {
      ++counts[h.edge.style];
      h.edge.occurrence_id = next_id();
      det.drafts.push_back(std::move(h.edge));
    }
  }
  int best = -1;
  for (CitationStyle st : {CitationStyle::Numeric, CitationStyle::AuthorYear, CitationStyle::Footnote}) {
    if (counts[st] > best) {
      best = counts[st];
      det.dominant_style = st;
    }
  }
  return det;
}

namespace {

struct Scored {
  const BibEntry* entry;
  double score;
};

std::optional<std::size_t> ask_disambiguation(ModelClient& client, const CitationEdge& edge, const std::string& sentence,
                                              const std::vector<Scored>& candidates, const AlignOptions& options) {
  std::string listing;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    listing += std::to_string(i + 1) + ") " + candidates[i].entry->raw + "\n";
  }
  CompletionRequest req;
  req.system_text = std::string(prompts::disambiguation_system);
  req.user_text = text::fill_template(prompts::disambiguation_user, {{"CITATION", edge.parts.empty() ? edge.surface_text : edge.parts[0]},
                                                                     {"SENTENCE", sentence},
                                                                     {"CANDIDATES", text::trim(listing)}});
  req.decoding = DecodingConfig::deterministic(options.seed);
  req.call_tag = options.call_tag;
  const std::string reply = text::trim(client.complete(req).at(0).text);
  static const std::regex kChoice(R"(CHOICE:\s*(\d+))", std::regex::icase);
  std::smatch m;
  if (std::regex_search(reply, m, kChoice)) {
    const std::size_t n = std::stoul(m[1].str());
    if (n >= 1 && n <= candidates.size()) return n - 1;
  }
  return std::nullopt;
}

}  // namespace

std::vector<CitationEdge> align_citations(const std::vector<CitationEdge>& drafts, const std::vector<BibEntry>& entries,
                                          const ParsedDocument& doc, ModelClient* client, const AlignOptions& options) {
  std::map<int, const BibEntry*> by_index;
  std::map<std::string, const BibEntry*> by_key;
  for (const auto& e : entries) {
    by_key.emplace(e.key, &e);
    if (!e.footnote) by_index.emplace(e.entry_index, &e);
  }
  std::vector<CitationEdge> out;
  for (const CitationEdge& d : drafts) {
    CitationEdge e = d;
    if (d.from_anchor) {
      out.push_back(std::move(e));
      continue;
    }
    e.target_keys.clear();
    e.unresolved_markers.clear();
    const std::string sentence = d.sentence_index < doc.sentences.size() ? doc.sentences[d.sentence_index].text : "";
    if (d.style == CitationStyle::Numeric) {
      for (int i : d.indices) {
        auto it = by_index.find(i);
        if (it == by_index.end()) {
          e.unresolved_markers.push_back(std::to_string(i));
        } else {
          e.target_keys.push_back(it->second->key);
        }
      }
    } else if (d.style == CitationStyle::Footnote) {
      const std::string key = "fn" + (d.parts.empty() ? "" : d.parts[0]);
      if (by_key.count(key)) {
        e.target_keys.push_back(key);
      } else {
        e.unresolved_markers.push_back(d.parts.empty() ? d.surface_text : d.parts[0]);
      }
    } else {
      const auto cite = d.parts.empty() ? std::nullopt : parse_author_year(d.parts[0]);
      if (!cite) {
        e.unresolved_markers.push_back(d.surface_text);
        out.push_back(std::move(e));
        continue;
      }
      // Candidates need at least one matching name.
      std::vector<Scored> named;
      for (const auto& be : entries) {
        if (be.footnote || name_overlap(*cite, be) <= 0.0) continue;
        named.push_back({&be, author_year_score(*cite, be, sentence)});
      }
      std::stable_sort(named.begin(), named.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
      const bool unique_best = !named.empty() && (named.size() == 1 || named[0].score > named[1].score + 1e-12);
      if (!named.empty() && named[0].score >= options.accept_threshold - 1e-12 && unique_best) {
        e.target_keys.push_back(named[0].entry->key);
      } else if (named.empty()) {
        e.unresolved_markers.push_back(d.parts[0]);
      } else {
        if (named.size() > static_cast<std::size_t>(options.max_candidates)) named.resize(static_cast<std::size_t>(options.max_candidates));
        std::optional<std::size_t> pick;
        if (client) pick = ask_disambiguation(*client, d, sentence, named, options);
        if (pick) {
          e.target_keys.push_back(named[*pick].entry->key);
        } else {
          e.ambiguity_flag = true;
        }
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---- whole-document entry points ---------------------------------------------------

ParseOutput finish_parse(ParsedDocument doc, ModelClient* client, std::int64_t seed) {
  ParseOutput out;
  BibliographyResult bib = parse_bibliography(doc);
  if (doc.origin == DocOrigin::Transcript) doc.bibliography = bib.entries;
  out.entries = bib.entries;
  const Detection det = detect_citations(doc);
  out.dominant_style = det.dominant_style;
  AlignOptions opts;
  opts.seed = seed;
  out.edges = align_citations(det.drafts, out.entries, doc, client, opts);
  // Narrative author-year matches with no candidate at all are prose, not citations.
  out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                 [](const CitationEdge& e) {
                                   return !e.from_anchor && e.style == CitationStyle::AuthorYear && e.target_keys.empty() &&
                                          !e.ambiguity_flag && e.surface_text.front() != '(';
                                 }),
                  out.edges.end());
  out.anomalies = verify_extraction(doc);
  out.anomalies.insert(out.anomalies.end(), bib.anomalies.begin(), bib.anomalies.end());
  out.doc = std::move(doc);
  return out;
}

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ContractError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string lower_ext(const fs::path& p) { return text::to_lower(p.extension().string()); }

}  // namespace

ParseOutput parse_path(const std::string& path, const StyleConfig& style_in, ModelClient* client, std::int64_t seed) {
  const fs::path p(path);
  if (!fs::exists(p)) throw ContractError("input does not exist: " + path);
  StyleConfig style = style_in;
  const std::string doc_id = p.stem().string();
  if (fs::is_directory(p)) {
    std::vector<fs::path> md;
    std::vector<fs::path> images;
    for (const auto& de : fs::directory_iterator(p)) {
      const std::string ext = lower_ext(de.path());
      if (ext == ".md" || ext == ".markdown" || ext == ".txt") md.push_back(de.path());
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".webp" || ext == ".tif" || ext == ".tiff") {
        images.push_back(de.path());
      }
    }
    std::sort(md.begin(), md.end());
    std::sort(images.begin(), images.end());
    std::vector<PageTranscript> transcripts;
    std::vector<ExtractionAnomaly> extra;
    if (!md.empty()) {
      for (std::size_t i = 0; i < md.size(); ++i) {
        transcripts.push_back(PageTranscript{static_cast<int>(i) + 1, text::trim(read_text(md[i])), false, false});
      }
    } else if (!images.empty()) {
      if (!client) throw ContractError("page images need a model client");
      std::vector<ImagePart> parts;
      for (const auto& img : images) {
        const std::string ext = lower_ext(img);
        parts.push_back(ImagePart{img.string(), ext == ".png" ? "image/png" : ext == ".webp" ? "image/webp"
                                                 : (ext == ".tif" || ext == ".tiff") ? "image/tiff"
                                                                                     : "image/jpeg"});
      }
      transcripts = transcribe_pages(parts, *client, seed);
      const ReparseReport rep = localized_reparse(parts, transcripts, *client, style, seed);
      if (!rep.remaining.empty()) {
        const MergeResult merged = merge_pages(transcripts, client);
        const ParsedDocument doc = parse_transcript(merged.text, style, doc_id, &merged);
        extra = semantic_audit(doc, rep.remaining, *client);
      }
    } else {
      throw ContractError("directory has no page transcripts or images: " + path);
    }
    const MergeResult merged = merge_pages(transcripts, client);
    ParsedDocument doc = parse_transcript(merged.text, style, doc_id, &merged);
    doc.warnings.insert(doc.warnings.end(), merged.warnings.begin(), merged.warnings.end());
    ParseOutput out = finish_parse(std::move(doc), client, seed);
    out.anomalies.insert(out.anomalies.end(), extra.begin(), extra.end());
    return out;
  }
  const std::string ext = lower_ext(p);
  const std::string source = read_text(p);
  if (style.base_dir.empty()) style.base_dir = p.parent_path().string();
  if (ext == ".tex" || ext == ".latex") return finish_parse(normalize_markup(source, style, doc_id, MarkupKind::Latex), client, seed);
  if (ext == ".xml" || ext == ".html" || ext == ".htm" || ext == ".nxml" || ext == ".jats") {
    return finish_parse(normalize_markup(source, style, doc_id, MarkupKind::Xml), client, seed);
  }
  if (ext == ".md" || ext == ".markdown" || ext == ".txt") return finish_parse(parse_transcript(source, style, doc_id), client, seed);
  throw ContractError("unsupported input type: " + path);
}

Json to_json(const ParseOutput& out) {
  Json edges = Json::array();
  for (const auto& e : out.edges) edges.push_back(to_json(e));
  Json entries = Json::array();
  for (const auto& e : out.entries) entries.push_back(to_json(e));
  Json anomalies = Json::array();
  for (const auto& a : out.anomalies) anomalies.push_back(to_json(a));
  return Json{{"doc_id", out.doc.doc_id},
              {"dominant_style", to_string(out.dominant_style)},
              {"document", to_json(out.doc)},
              {"entries", entries},
              {"edges", edges},
              {"anomalies", anomalies}};
}

}  // namespace citecheck::dpcm
