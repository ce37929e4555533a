#pragma once

// Minimal RFC 4180 style CSV reading and writing. Fields may be quoted;
// quoted fields may contain commas, doubled quotes and newlines.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace strata::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws DataError if missing.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;
};

Table parse(std::string_view text);
Table read_file(const std::filesystem::path& path);

/// Quotes a field only when it contains a delimiter, quote or newline.
std::string escape(std::string_view field);

void write_row(std::ostream& os, const std::vector<std::string>& fields);
void write_file(const std::filesystem::path& path, const Table& table);

/// Round-trippable, locale-independent rendering used in every report.
std::string format_number(double v);

/// Parses a number; empty or malformed text yields nullopt.
std::optional<double> parse_number(std::string_view text);

}  // namespace strata::csv
