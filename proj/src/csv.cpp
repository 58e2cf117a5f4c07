#include "carefl/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "carefl/error.hpp"

namespace carefl {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_number(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (first) {
      first = false;
      cols = fields.size();
      double probe = 0.0;
      bool numeric = true;
      for (auto f : fields) numeric = numeric && parse_number(f, probe);
      if (!numeric) {
        for (auto f : fields) table.names.emplace_back(f);
        continue;
      }
    }
    if (fields.size() != cols) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_number(fields[c], v)) {
        throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                             ": non-numeric value '" + std::string(fields[c]) + "'",
                         line_no);
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) {
    throw ParseError(first ? "empty file" : "no data rows after header", line_no);
  }
  if (table.names.empty()) {
    for (std::size_t c = 0; c < cols; ++c) table.names.push_back("x" + std::to_string(c + 1));
  }
  table.data = Matrix(rows, cols, std::move(values));
  return table;
}

CsvTable load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_csv(const Matrix& data, const std::vector<std::string>& names) {
  if (names.size() != data.cols()) throw ShapeError("column name count does not match data");
  std::string out;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c) out += ',';
    out += names[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < data.cols(); ++c) {
      if (c) out += ',';
      out += format_double(data(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const Matrix& data, const std::vector<std::string>& names) {
  const auto text = format_csv(data, names);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

}  // namespace carefl
