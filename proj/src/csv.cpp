// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigverify/csv.hpp"

#include <fstream>
#include <sstream>

#include "sigverify/error.hpp"

namespace sigverify::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ValidationError("CSV is missing column '" + std::string(name) + "'");
}

Table parse(std::string_view text) {
  Table t;
  std::vector<Row> records;
  std::vector<std::size_t> lines;
  Row row;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t line = 1;
  std::size_t record_line = 1;
  auto end_record = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (!(row.size() == 1 && row[0].empty())) {
      records.push_back(std::move(row));
      lines.push_back(record_line);
    }
    row.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        field.push_back(ch);
        any = true;
    }
  }
  if (quoted) throw ValidationError("CSV ends inside a quoted field");
  if (any || !field.empty() || !row.empty()) end_record();
  if (records.empty()) throw ValidationError("CSV has no header");
  t.header = std::move(records.front());
  t.rows.assign(std::make_move_iterator(records.begin() + 1),
                std::make_move_iterator(records.end()));
  t.lines.assign(lines.begin() + 1, lines.end());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != t.header.size()) {
      throw ValidationError("CSV line " + std::to_string(t.lines[i]) +
                            ": expected " + std::to_string(t.header.size()) +
                            " fields, got " + std::to_string(t.rows[i].size()));
    }
  }
  return t;
}

Table read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(row[i]);
  }
  return out;
}

void write(const std::filesystem::path& path, const Row& header,
           const std::vector<Row>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << format_row(header) << '\n';
  for (const auto& r : rows) os << format_row(r) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace sigverify::csv
