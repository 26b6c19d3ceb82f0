#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace solarmap::io {

/// In-memory CSV with a header row. Lines starting with '#' are provenance
/// comments and are skipped on read.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by name; throws std::out_of_range when absent.
  std::size_t column(std::string_view name) const;
  std::optional<std::size_t> find_column(std::string_view name) const;
};

CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

/// Shortest representation that round-trips to the same double.
std::string format_number(double v);
std::string format_optional(const std::optional<double>& v);

/// Empty, "NA" and "nan" parse as missing.
std::optional<double> parse_optional(std::string_view text);
double parse_number(std::string_view text);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace solarmap::io
