#include "enginefault/csv_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "enginefault/errors.hpp"

namespace enginefault {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  // %.17g round-trips every finite double.
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_table_csv(const Table& table, const std::filesystem::path& path,
                     const std::string& time_name) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF on all hosts
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << time_name;
  for (int c = 0; c < table.channels; ++c) {
    out << ',' << (c < static_cast<int>(table.names.size()) ? table.names[c]
                                                           : "ch" + std::to_string(c));
  }
  out << '\n';
  for (std::size_t r = 0; r < table.rows(); ++r) {
    out << format_double(table.times[r]);
    for (int c = 0; c < table.channels; ++c) out << ',' << format_double(table.at(r, c));
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

double parse_cell(const std::string& cell, const std::filesystem::path& path) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  const char* s = cell.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  if (end == s) {
    // allow "nan"/"NaN" and stray spaces
    std::string low;
    for (char ch : cell)
      if (!std::isspace(static_cast<unsigned char>(ch))) low += static_cast<char>(std::tolower(ch));
    if (low == "nan" || low.empty()) return std::numeric_limits<double>::quiet_NaN();
    throw IoError("unparseable cell '" + cell + "' in " + path.string());
  }
  return v;
}

}  // namespace

Table read_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();

  Table table;
  {
    std::stringstream hs(line);
    std::string col;
    bool first = true;
    while (std::getline(hs, col, ',')) {
      if (first) {
        first = false;
      } else {
        table.names.push_back(col);
      }
    }
    table.channels = static_cast<int>(table.names.size());
  }
  if (table.channels == 0) throw IoError("csv has no value columns: " + path.string());

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    int idx = -1;  // -1 = time column
    while (std::getline(ls, cell, ',')) {
      double v = parse_cell(cell, path);
      if (idx == -1) {
        table.times.push_back(v);
      } else if (idx < table.channels) {
        table.values.push_back(v);
      } else {
        throw IoError("row " + std::to_string(line_no) + " has too many cells in " + path.string());
      }
      ++idx;
    }
    if (idx != table.channels)
      throw IoError("row " + std::to_string(line_no) + " has " + std::to_string(idx) +
                    " value cells, expected " + std::to_string(table.channels) + " in " +
                    path.string());
  }
  return table;
}

}  // namespace enginefault
