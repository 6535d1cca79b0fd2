#include "pf/csv.hpp"

#include <cstdio>
#include <sstream>

#include "pf/errors.hpp"

namespace pf {

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvWriter::CsvWriter(const std::string& path, std::span<const std::string> header)
    : path_(path), out_(path) {
  if (!out_) throw IoError("cannot open for writing: " + path);
  write_fields(header);
}

CsvWriter::CsvWriter(const std::string& path, std::initializer_list<std::string> header)
    : CsvWriter(path, std::span<const std::string>(header.begin(), header.size())) {}

void CsvWriter::write_fields(std::span<const std::string> fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << csv_escape(fields[i]);
  }
  out_ << '\n';
  if (!out_) throw IoError("write failed: " + path_);
}

void CsvWriter::row(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ',';
    out_ << format_number(values[i]);
  }
  out_ << '\n';
  if (!out_) throw IoError("write failed: " + path_);
}

void CsvWriter::row(std::initializer_list<double> values) {
  row(std::span<const double>(values.begin(), values.size()));
}

void CsvWriter::text_row(std::span<const std::string> fields) { write_fields(fields); }

CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!have_header) {
      table.header = fields;
      have_header = true;
      continue;
    }
    std::vector<double> row;
    for (const auto& f : fields) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(f, &used));
        if (f.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(f);
      } catch (const std::logic_error&) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": not a number: '" + f + "'");
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw ValidationError(path + ": empty CSV");
  return table;
}

}  // namespace pf
