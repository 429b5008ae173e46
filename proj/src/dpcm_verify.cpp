#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include "citecheck/dpcm.hpp"
#include "citecheck/prompts.hpp"
#include "citecheck/text.hpp"

namespace citecheck::dpcm {

std::string to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::HeadingJump: return "HeadingJump";
    case AnomalyKind::NumberingGap: return "NumberingGap";
    case AnomalyKind::CitationSequenceGap: return "CitationSequenceGap";
    case AnomalyKind::SuspiciousSegment: return "SuspiciousSegment";
  }
  return "SuspiciousSegment";
}

Json to_json(const ExtractionAnomaly& a) {
  return Json{{"kind", to_string(a.kind)},
              {"block_begin", a.block_begin},
              {"block_end", a.block_end},
              {"page_begin", a.page_begin},
              {"page_end", a.page_end},
              {"detail", a.detail}};
}

namespace {

ExtractionAnomaly make(const ParsedDocument& doc, AnomalyKind kind, std::size_t begin, std::size_t end,
                       std::string detail) {
  end = std::max(end, begin + 1);
  end = std::min(end, doc.blocks.size());
  ExtractionAnomaly a;
  a.kind = kind;
  a.block_begin = begin;
  a.block_end = end;
  a.page_begin = doc.blocks.empty() ? 0 : doc.blocks[begin].span.page;
  a.page_end = doc.blocks.empty() ? 0 : doc.blocks[end - 1].span.page;
  a.detail = std::move(detail);
  return a;
}

struct Numbered {
  int number = 0;
  std::size_t block = 0;
};

// Duplicates, regressions, and runs of more than one missing number.
void check_sequence(const ParsedDocument& doc, const std::vector<Numbered>& seq, const std::string& what,
                    std::vector<ExtractionAnomaly>& out) {
  int prev = 0;
  std::size_t prev_block = seq.empty() ? 0 : seq.front().block;
  for (const auto& n : seq) {
    if (n.number == prev) {
      out.push_back(make(doc, AnomalyKind::NumberingGap, prev_block, n.block + 1,
                         "duplicate " + what + " " + std::to_string(n.number)));
    } else if (n.number < prev) {
      out.push_back(make(doc, AnomalyKind::NumberingGap, prev_block, n.block + 1,
                         what + " " + std::to_string(n.number) + " after " + std::to_string(prev)));
    } else if (n.number - prev - 1 > 1) {
      out.push_back(make(doc, AnomalyKind::NumberingGap, prev_block, n.block + 1,
                         what + " numbering jumps from " + std::to_string(prev) + " to " + std::to_string(n.number)));
    }
    prev = std::max(prev, n.number);
    prev_block = n.block;
  }
}

std::optional<int> equation_number(const std::string& t) {
  static const std::regex kTag(R"(\\tag\{(\d+)\})");
  static const std::regex kTrailing(R"(\((\d+)\)\s*(?:\$\$)?\s*$)");
  std::smatch m;
  if (std::regex_search(t, m, kTag)) return std::stoi(m[1].str());
  if (std::regex_search(t, m, kTrailing)) return std::stoi(m[1].str());
  return std::nullopt;
}

}  // namespace

std::vector<ExtractionAnomaly> verify_extraction(const ParsedDocument& doc) {
  std::vector<ExtractionAnomaly> out;

  // Heading levels.
  std::optional<std::size_t> prev_heading;
  for (std::size_t b = 0; b < doc.blocks.size(); ++b) {
    const Block& blk = doc.blocks[b];
    if (blk.kind != BlockKind::Heading) continue;
    if (prev_heading) {
      const int from = doc.blocks[*prev_heading].level;
      const int to = blk.level;
      if (std::abs(to - from) > 1) {
        out.push_back(make(doc, AnomalyKind::HeadingJump, *prev_heading, b + 1,
                           "heading level " + std::to_string(from) + " -> " + std::to_string(to) + " at '" + blk.text + "'"));
      }
    }
    prev_heading = b;
  }

  // Equations, figures, tables.
  std::vector<Numbered> equations;
  std::vector<Numbered> figures;
  std::vector<Numbered> tables;
  static const std::regex kFigure(R"(^\**(?:Figure|Fig\.)\s*(\d+))");
  static const std::regex kTable(R"(^\**(?:Table|Tab\.)\s*(\d+))");
  for (std::size_t b = 0; b < doc.blocks.size(); ++b) {
    const Block& blk = doc.blocks[b];
    std::smatch m;
    if (blk.kind == BlockKind::DisplayMath) {
      if (auto n = equation_number(blk.text)) equations.push_back({*n, b});
    } else if (blk.kind == BlockKind::Caption) {
      if (std::regex_search(blk.text, m, kFigure)) figures.push_back({std::stoi(m[1].str()), b});
      if (std::regex_search(blk.text, m, kTable)) tables.push_back({std::stoi(m[1].str()), b});
    }
  }
  check_sequence(doc, equations, "equation", out);
  check_sequence(doc, figures, "figure", out);
  check_sequence(doc, tables, "table", out);

  // Numeric citation indices in order of first appearance.
  const Detection det = detect_citations(doc);
  std::vector<Numbered> first_seen;
  std::set<int> seen;
  for (const auto& e : det.drafts) {
    if (e.style != CitationStyle::Numeric) continue;
    std::vector<int> indices = e.indices;
    if (indices.empty() && e.from_anchor) {
      for (const auto& k : e.target_keys) {
        for (const auto& be : doc.bibliography) {
          if (be.key == k) indices.push_back(be.entry_index);
        }
      }
    }
    for (int i : indices) {
      if (seen.insert(i).second) first_seen.push_back({i, e.block});
    }
  }
  if (!first_seen.empty()) {
    std::vector<Numbered> sorted = first_seen;
    std::sort(sorted.begin(), sorted.end(), [](const Numbered& a, const Numbered& b) { return a.number < b.number; });
    int prev = 0;
    std::size_t prev_block = first_seen.front().block;
    for (const auto& n : sorted) {
      if (n.number - prev - 1 > 10) {
        const std::size_t lo = std::min(prev_block, n.block);
        const std::size_t hi = std::max(prev_block, n.block);
        out.push_back(make(doc, AnomalyKind::CitationSequenceGap, lo, hi + 1,
                           "no citations between [" + std::to_string(prev) + "] and [" + std::to_string(n.number) + "]"));
      }
      prev = n.number;
      prev_block = n.block;
    }
    std::size_t pairs = 0;
    std::size_t descents = 0;
    for (std::size_t i = 1; i < first_seen.size(); ++i) {
      ++pairs;
      if (first_seen[i].number < first_seen[i - 1].number) ++descents;
    }
    // Needs a few pairs before a fraction means anything.
    if (pairs >= 5 && static_cast<double>(descents) > 0.2 * static_cast<double>(pairs)) {
      out.push_back(make(doc, AnomalyKind::CitationSequenceGap, first_seen.front().block, first_seen.back().block + 1,
                         std::to_string(descents) + " of " + std::to_string(pairs) +
                             " first-appearance citation pairs are out of order"));
    }
  }
  return out;
}

namespace {

bool overlaps(const ExtractionAnomaly& a, const ExtractionAnomaly& b) {
  return a.kind == b.kind && a.page_begin <= b.page_end && b.page_begin <= a.page_end;
}

std::vector<ExtractionAnomaly> analyze(const std::vector<PageTranscript>& transcripts, ModelClient& client,
                                       const StyleConfig& style) {
  const MergeResult merged = merge_pages(transcripts, &client);
  const ParsedDocument doc = parse_transcript(merged.text, style, "", &merged);
  return verify_extraction(doc);
}

}  // namespace

ReparseReport localized_reparse(const std::vector<ImagePart>& pages, std::vector<PageTranscript>& transcripts,
                                ModelClient& client, const StyleConfig& style, std::int64_t seed, int max_attempts) {
  ReparseReport report;
  std::vector<ExtractionAnomaly> current = analyze(transcripts, client, style);
  const std::vector<ExtractionAnomaly> initial = current;
  std::set<int> reparsed;
  for (const auto& a : initial) {
    const bool still_there =
        std::any_of(current.begin(), current.end(), [&](const ExtractionAnomaly& c) { return overlaps(a, c); });
    if (!still_there) continue;
    const int lo = std::max(1, a.page_begin);
    const int hi = std::min(static_cast<int>(pages.size()), std::max(a.page_end, lo));
    if (lo > hi) continue;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      std::vector<ImagePart> subset(pages.begin() + (lo - 1), pages.begin() + hi);
      auto fresh = transcribe_pages(subset, client, seed + attempt, "dpcm/reparse");
      std::vector<PageTranscript> candidate = transcripts;
      for (std::size_t k = 0; k < fresh.size(); ++k) {
        const int page = lo + static_cast<int>(k);
        reparsed.insert(page);
        for (auto& t : candidate) {
          if (t.page_index == page) t.markdown = fresh[k].markdown;
        }
      }
      auto after = analyze(candidate, client, style);
      const bool gone = std::none_of(after.begin(), after.end(), [&](const ExtractionAnomaly& c) { return overlaps(a, c); });
      if (gone) {
        transcripts = std::move(candidate);
        current = std::move(after);
        report.resolved.push_back(a);
        report.spliced = true;
        break;
      }
    }
  }
  report.reparsed_pages.assign(reparsed.begin(), reparsed.end());
  report.remaining = current;
  return report;
}

std::vector<ExtractionAnomaly> semantic_audit(const ParsedDocument& doc, const std::vector<ExtractionAnomaly>& regions,
                                              ModelClient& client, const std::string& call_tag) {
  std::vector<ExtractionAnomaly> out;
  for (const auto& region : regions) {
    if (doc.blocks.empty()) break;
    const std::size_t lo = region.block_begin > 0 ? region.block_begin - 1 : 0;
    const std::size_t hi = std::min(doc.blocks.size(), region.block_end + 1);
    std::string segment;
    for (std::size_t b = lo; b < hi; ++b) {
      const Block& blk = doc.blocks[b];
      if (!segment.empty()) segment += "\n\n";
      segment += blk.kind == BlockKind::Heading ? std::string(static_cast<std::size_t>(blk.level), '#') + " " + blk.text : blk.text;
    }
    std::string before = "the start of the document";
    std::string after = "the end of the document";
    for (std::size_t b = lo + 1; b-- > 0;) {
      if (doc.blocks[b].kind == BlockKind::Heading) {
        before = "'" + doc.blocks[b].text + "'";
        break;
      }
    }
    for (std::size_t b = hi; b < doc.blocks.size(); ++b) {
      if (doc.blocks[b].kind == BlockKind::Heading) {
        after = "'" + doc.blocks[b].text + "'";
        break;
      }
    }
    CompletionRequest req;
    req.system_text = std::string(prompts::semantic_audit);
    req.user_text = "[Structure]\nbetween " + before + " and " + after + "\n\n[Segment]\n" + segment;
    req.decoding = DecodingConfig::deterministic(0);
    req.call_tag = call_tag;
    const std::string reply = text::trim(client.complete(req).at(0).text);
    const auto nl = reply.find('\n');
    std::string label = text::trim(nl == std::string::npos ? reply : reply.substr(0, nl));
    while (!label.empty() && (label.back() == '.' || label.back() == ':')) label.pop_back();
    if (!label.empty() && label[0] == '-') label = text::trim(label.substr(1));
    if (label.rfind("SUSPICIOUS_", 0) == 0) {
      ExtractionAnomaly a = region;
      a.kind = AnomalyKind::SuspiciousSegment;
      a.block_begin = lo;
      a.block_end = hi;
      a.page_begin = doc.blocks[lo].span.page;
      a.page_end = doc.blocks[hi - 1].span.page;
      a.detail = label + (nl == std::string::npos ? "" : ": " + text::trim(reply.substr(nl + 1)));
      out.push_back(std::move(a));
    }
  }
  return out;
}

}  // namespace citecheck::dpcm
