#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ugcimpact::csv {

struct Row {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// Minimal RFC 4180 reader: comma separated, optional double quotes, no
/// embedded newlines. Blank lines are skipped; fields are trimmed.
class Table {
 public:
  static Table read(std::istream& in, const std::string& source = "<stream>");

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& source() const { return source_; }

  /// Column position by name; throws ParseError when `required` and missing.
  std::ptrdiff_t column(std::string_view name, bool required = true) const;

  [[noreturn]] void fail(const Row& row, const std::string& what) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

double parse_double(std::string_view text);

/// Quotes a field only when it contains a comma or a quote.
std::string escape(std::string_view field);

/// Shortest round-trip decimal representation.
std::string format_number(double value);

}  // namespace ugcimpact::csv
