#include "dk/csv.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dk {

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> header)
    : out_(out), columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << csv_escape(header[i]);
  out_ << '\n';
}

void CsvWriter::write_cell(const Cell& cell) {
  if (const auto* d = std::get_if<double>(&cell))
    out_ << format_real(*d);
  else if (const auto* i = std::get_if<long long>(&cell))
    out_ << *i;
  else
    out_ << csv_escape(std::get<std::string>(cell));
}

void CsvWriter::row(std::initializer_list<Cell> cells) { row(std::vector<Cell>(cells)); }

void CsvWriter::row(const std::vector<Cell>& cells) {
  if (cells.size() != columns_) throw std::invalid_argument("csv row has wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    write_cell(cells[i]);
  }
  out_ << '\n';
}

} // namespace dk
