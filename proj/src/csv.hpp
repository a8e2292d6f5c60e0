#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace lesionbench::csv {

struct Row {
  // 1-based line number of the row in the source text.
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// Splits RFC 4180-style text into rows. Accepts LF and CRLF, skips blank
// lines, honours double-quoted fields.
std::vector<Row> parse(std::string_view text);

// Quotes a field only when it contains a comma, quote or line break.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

std::string_view trim(std::string_view s);

}  // namespace lesionbench::csv
