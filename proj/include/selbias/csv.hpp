#ifndef SELBIAS_CSV_HPP_
#define SELBIAS_CSV_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "selbias/common.hpp"

namespace selbias::csv {

using Row = std::vector<std::string>;

// Comment line written at the top of every CSV/TSV artifact.
inline std::string schema_line(std::string_view schema, int version) {
  return "# selbias-schema: " + std::string(schema) + "/" +
         std::to_string(version) + "\n";
}

inline std::string quote(std::string_view field) {
  const bool needs = field.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(row[i]);
  }
  out.push_back('\n');
  return out;
}

struct Table {
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

// Parses RFC-4180 style CSV. Lines starting with '#' outside quotes are
// skipped. The first non-comment record is the header.
inline Table parse(std::string_view data) {
  Table table;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool at_line_start = true;
  bool row_has_content = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto finish_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (table.header.empty() && table.rows.empty()) {
      table.header = std::move(row);
    } else {
      table.rows.push_back(std::move(row));
      table.line_numbers.push_back(row_line);
    }
    row.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (at_line_start && !in_quotes) {
      row_line = line;
      if (c == '#') {
        while (i < data.size() && data[i] != '\n') ++i;
        ++line;
        continue;
      }
      if (c == '\n') {
        ++line;
        continue;
      }
      if (c == '\r') continue;
      at_line_start = false;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
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
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        finish_row();
        ++line;
        at_line_start = true;
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) throw ParseError("csv: unterminated quoted field");
  if (row_has_content || !field.empty() || !row.empty()) finish_row();
  return table;
}

inline std::size_t column(const Table& table, std::string_view name) {
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (table.header[i] == name) return i;
  }
  throw ParseError("csv: missing column '" + std::string(name) + "'");
}

}  // namespace selbias::csv

#endif  // SELBIAS_CSV_HPP_
