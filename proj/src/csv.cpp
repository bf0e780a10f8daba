#include "poststrat/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "poststrat/errors.hpp"

namespace poststrat::csv {

namespace {

// Splits one logical record; handles quoted fields containing commas,
// doubled quotes, and embedded newlines (pulled from `in`).
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;

  std::string field;
  bool quoted = false;
  std::size_t pos = 0;
  while (true) {
    if (pos >= line.size()) {
      if (quoted) {
        std::string more;
        if (!std::getline(in, more)) throw DataError("csv: unterminated quoted field");
        field.push_back('\n');
        line = std::move(more);
        pos = 0;
        continue;
      }
      break;
    }
    const char c = line[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < line.size() && line[pos + 1] == '"') {
          field.push_back('"');
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
    ++pos;
  }
  fields.push_back(std::move(field));
  return true;
}

bool blank(const std::vector<std::string>& fields) {
  return fields.size() == 1 && fields.front().empty();
}

}  // namespace

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  return std::nullopt;
}

std::size_t Table::require_column(std::string_view name) const {
  if (auto c = column(name)) return *c;
  throw DataError("csv: missing required column '" + std::string(name) + "'");
}

Table read(std::istream& in) {
  Table table;
  std::vector<std::string> fields;
  if (!read_record(in, fields) || blank(fields)) throw DataError("csv: missing header row");
  // Strip a UTF-8 byte-order mark.
  if (fields.front().rfind("\xEF\xBB\xBF", 0) == 0) fields.front().erase(0, 3);
  table.header = fields;

  std::size_t line = 1;
  while (read_record(in, fields)) {
    ++line;
    if (blank(fields)) continue;
    if (fields.size() != table.header.size()) {
      throw DataError("csv: line " + std::to_string(line) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(fields);
  }
  return table;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return read(in);
}

std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t c = 0; c < fields.size(); ++c) {
    if (c) out << ',';
    out << quote(fields[c]);
  }
  out << '\n';
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_number(std::string_view field, std::size_t row, std::string_view column) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  if (field.empty() || field == "NA") return std::nullopt;
  double value = 0.0;
  const char* first = field.data();
  if (!field.empty() && field.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw DataError("row " + std::to_string(row) + ", column '" + std::string(column) +
                    "': not a number: '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace poststrat::csv
