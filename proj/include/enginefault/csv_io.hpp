#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "enginefault/series.hpp"

namespace enginefault {

// Writes `table` as CSV: header row, time column first, '.' decimals, LF line
// endings. Values are printed with enough digits to round-trip doubles.
void write_table_csv(const Table& table, const std::filesystem::path& path,
                     const std::string& time_name = "time");

// Reads a CSV produced by write_table_csv (or any file matching that schema).
// Empty cells and "nan" parse as NaN so gap repair can run downstream.
Table read_table_csv(const std::filesystem::path& path);

// Round-trip-exact formatting for one double ('.' decimal separator).
std::string format_double(double v);

}  // namespace enginefault
