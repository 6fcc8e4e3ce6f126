#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dedtwin/errors.hpp"

namespace dedtwin::csv {

// Numeric table with a header row. Columns are stored column-major.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  std::ptrdiff_t find(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
};

// "mpw[mm]" -> {"mpw", "mm"}; "n" -> {"n", ""}
inline std::pair<std::string, std::string> split_name_unit(std::string_view field) {
  const auto open = field.find('[');
  if (open == std::string_view::npos || field.back() != ']')
    return {std::string(field), std::string()};
  return {std::string(field.substr(0, open)),
          std::string(field.substr(open + 1, field.size() - open - 2))};
}

// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, std::size_t line, std::size_t col) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw InvalidArgument("csv: line " + std::to_string(line) + ", column " +
                          std::to_string(col + 1) + ": not a number: '" +
                          std::string(text) + "'");
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline Table read(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (t.header.empty()) {
      for (auto f : fields) t.header.emplace_back(f);
      t.columns.resize(t.header.size());
      continue;
    }
    if (fields.size() != t.header.size())
      throw InvalidArgument("csv: line " + std::to_string(lineno) + " has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(t.header.size()));
    for (std::size_t c = 0; c < fields.size(); ++c)
      t.columns[c].push_back(parse_double(fields[c], lineno, c));
  }
  if (t.header.empty()) throw InvalidArgument("csv: missing header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("csv: cannot open " + path);
  return read(in);
}

inline void write(std::ostream& out, const Table& t) {
  for (std::size_t c = 0; c < t.header.size(); ++c) out << (c ? "," : "") << t.header[c];
  out << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      out << (c ? "," : "") << format_double(t.columns[c][r]);
    out << '\n';
  }
}

inline void write_file(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("csv: cannot write " + path);
  write(out, t);
}

}  // namespace dedtwin::csv
