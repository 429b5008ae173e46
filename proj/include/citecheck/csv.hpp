#pragma once

#include <string>
#include <string_view>
#include <vector>

// RFC 4180 reading and writing: quoted fields, doubled quotes, embedded
// newlines, CRLF or LF records.
namespace citecheck::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;  // 1-based source line of each row

  // Column index by exact header name, or -1.
  int column(std::string_view name) const;
};

// Throws SchemaError on an unterminated quote.
Table parse(std::string_view data);
Table read_file(const std::string& path);

std::string escape(std::string_view field);
std::string format_row(const std::vector<std::string>& fields);

}  // namespace citecheck::csv
