#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace poststrat::csv {

// Minimal RFC-4180 style reader/writer: comma separated, double-quote
// quoting, header row required.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

std::string quote(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest round-trippable decimal form of a double.
std::string format_number(double value);

/// Parses a numeric field; empty means missing (returns nullopt). Throws DataError on junk.
std::optional<double> parse_number(std::string_view field, std::size_t row, std::string_view column);

}  // namespace poststrat::csv
