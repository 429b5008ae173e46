#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Byte-oriented text helpers. Input is UTF-8; bytes >= 0x80 are treated as
// letters so accented names survive normalization.
namespace citecheck::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

bool is_letter(unsigned char c);
bool is_upper(unsigned char c);
bool is_lower(unsigned char c);

// Whitespace-separated token count; the offline token proxy.
std::size_t whitespace_token_count(std::string_view s);

// Lowercase, punctuation to spaces, whitespace collapsed.
std::string normalize_title(std::string_view s);
std::vector<std::string> title_tokens(std::string_view s);

// Lowercase letters only ("O'Neil" -> "oneil").
std::string normalize_family_name(std::string_view s);

std::size_t levenshtein(std::string_view a, std::string_view b);

// 1 - edit_distance / max_length over normalize_title()d strings; 1.0 for two empty titles.
double title_similarity(std::string_view a, std::string_view b);

// Whitespace collapse, typographic quotes and dashes folded to ASCII, case folded,
// trailing sentence punctuation removed. Used for paraphrase stability checks.
std::string normalize_for_compare(std::string_view s);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);

// Shell-style glob ('*', '?', '[...]').
bool glob_match(std::string_view pattern, std::string_view text);

// Sentence boundaries as [begin, end) byte ranges into `s`, whitespace excluded.
// Rule table: split after . ! ? (and CJK full stops) followed by whitespace and an
// opener (uppercase, digit, quote, bracket, '$', '*'), unless the period closes a
// known abbreviation or a single-letter initial, or sits inside inline math,
// brackets, or parentheses.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view s);
std::vector<std::string> split_sentences(std::string_view s);
std::string first_sentence(std::string_view s);

// Removes numeric ("[3]", "[3, 5]", "[3–5]"), footnote ("[^2]"), and
// parenthetical author-year ("(Smith, 2020)") markers.
std::string strip_citation_markers(std::string_view s);

// Replaces {name} placeholders; unknown placeholders are left as-is.
std::string fill_template(std::string_view tmpl,
                          const std::vector<std::pair<std::string, std::string>>& values);

std::string strip_code_fence(std::string_view s);

}  // namespace citecheck::text
