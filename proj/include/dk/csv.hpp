#pragma once

#include <initializer_list>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace dk {

/// Reals are printed with 17 significant digits and '.' as decimal separator.
std::string format_real(double x);

/// RFC-4180 style writer: header row, comma separated, CRLF-free, quoted
/// fields when they contain separators or quotes.
class CsvWriter {
public:
  using Cell = std::variant<double, long long, std::string>;

  CsvWriter(std::ostream& out, std::vector<std::string> header);

  void row(std::initializer_list<Cell> cells);
  void row(const std::vector<Cell>& cells);

private:
  void write_cell(const Cell& cell);

  std::ostream& out_;
  std::size_t columns_;
};

std::string csv_escape(const std::string& field);

} // namespace dk
