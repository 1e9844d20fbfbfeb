#include "ugcimpact/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "ugcimpact/error.hpp"

namespace ugcimpact::csv {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& line, const std::string& source, std::size_t lineno) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) {
    throw Error(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": unterminated quote");
  }
  out.push_back(was_quoted ? field : trim(field));
  return out;
}

}  // namespace

Table Table::read(std::istream& in, const std::string& source) {
  Table t;
  t.source_ = source;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split(line, source, lineno);
    if (!have_header) {
      t.header_ = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header_.size()) {
      throw Error(ErrorCode::ParseError, source + ":" + std::to_string(lineno) + ": expected " +
                                             std::to_string(t.header_.size()) + " fields, found " +
                                             std::to_string(fields.size()));
    }
    t.rows_.push_back(Row{lineno, std::move(fields)});
  }
  if (!have_header) throw Error(ErrorCode::ParseError, source + ": empty file (no header)");
  return t;
}

std::ptrdiff_t Table::column(std::string_view name, bool required) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return static_cast<std::ptrdiff_t>(i);
  }
  if (required) throw Error(ErrorCode::ParseError, source_ + ": missing column '" + std::string(name) + "'");
  return -1;
}

void Table::fail(const Row& row, const std::string& what) const {
  throw Error(ErrorCode::ParseError, source_ + ":" + std::to_string(row.line) + ": " + what);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw Error(ErrorCode::ParseError, "not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace ugcimpact::csv
