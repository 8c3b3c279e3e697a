// Copyright 2026 The sigverify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sigverify::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;
  /// 1-based source line of each row, for error messages.
  std::vector<std::size_t> lines;

  /// Index of a header column; throws ValidationError if absent.
  std::size_t column(std::string_view name) const;
};

/// Comma-separated with RFC 4180 quoting. The first record is the header.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

std::string escape(std::string_view field);
std::string format_row(const Row& row);
void write(const std::filesystem::path& path, const Row& header,
           const std::vector<Row>& rows);

}  // namespace sigverify::csv
