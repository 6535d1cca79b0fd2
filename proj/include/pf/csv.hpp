#pragma once

#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pf {

/// Nine significant digits, the precision used by every CSV surface.
std::string format_number(double value);

/// Minimal RFC-4180 writer: comma separated, CRLF-free, fields quoted only
/// when they contain a comma, quote or newline.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::span<const std::string> header);
  CsvWriter(const std::string& path, std::initializer_list<std::string> header);

  void row(std::span<const double> values);
  void row(std::initializer_list<double> values);
  void text_row(std::span<const std::string> fields);

  const std::string& path() const { return path_; }

 private:
  void write_fields(std::span<const std::string> fields);

  std::string path_;
  std::ofstream out_;
};

std::string csv_escape(std::string_view field);

/// Rows of a numeric CSV with a header line. Blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_numeric_csv(const std::string& path);

}  // namespace pf
