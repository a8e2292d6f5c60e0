#include "csv.hpp"

#include "lesionbench/errors.hpp"

namespace lesionbench::csv {

std::vector<Row> parse(std::string_view text) {
  std::vector<Row> rows;
  Row current;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;
  std::size_t row_start_line = 1;

  auto finish_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto finish_row = [&] {
    finish_field();
    const bool blank = current.fields.size() == 1 && current.fields[0].empty();
    if (!blank) {
      current.line = row_start_line;
      rows.push_back(std::move(current));
    }
    current = Row{};
    row_start_line = line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_was_quoted)
          throw FormatError("line " + std::to_string(line) + ": stray quote");
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        finish_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        field.push_back(c);
        break;
      case '\n':
        ++line;
        finish_row();
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) throw FormatError("unterminated quoted field");
  if (!field.empty() || !current.fields.empty() || field_was_quoted) finish_row();
  return rows;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace lesionbench::csv
