#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "carefl/matrix.hpp"

namespace carefl {

struct CsvTable {
  Matrix data;
  std::vector<std::string> names;  // x1..xd when the file has no header
};

// Comma-separated numeric body with an optional header row. Errors carry
// the 1-based line number.
CsvTable parse_csv(std::string_view text);
CsvTable load_csv(const std::string& path);

// Shortest decimal that reads back to the same double.
std::string format_double(double v);
std::string format_csv(const Matrix& data, const std::vector<std::string>& names);
void write_csv(const std::string& path, const Matrix& data, const std::vector<std::string>& names);

}  // namespace carefl
