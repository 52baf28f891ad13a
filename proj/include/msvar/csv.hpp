#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msvar {

// Header plus string cells; the row number reported in diagnostics is the
// 1-based line number in the file (header is line 1).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name, std::string_view file) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

// Parses a numeric cell; empty, "NA" and "nan" count as missing.
std::optional<double> parse_number(std::string_view cell);

// Shortest decimal that reads back to the same double for machine-readable files.
std::string format_exact(double value);
// 4 significant digits for human-facing summaries.
std::string format_short(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace msvar
