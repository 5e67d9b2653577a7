#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fmr {

/// 17 significant digits, so every double round-trips.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  ///< data rows x columns
};

/// Numeric CSV with one header row. Empty, NA or non-numeric cells throw DataError naming
/// the row (1-based, header excluded) and column.
CsvTable read_numeric_csv(const std::filesystem::path& path);
CsvTable parse_numeric_csv(std::string_view text, const std::string& source = "<input>");

void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const Eigen::MatrixXd& values);
/// Text cells, quoted when they contain a comma or quote.
void write_text_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

/// Flat "key = value" lines; '#' starts a comment. Duplicate keys and lines without '='
/// throw ConfigError.
std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& source);
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Throws ConfigError when the file cannot be opened.
void write_file(const std::filesystem::path& path, std::string_view content);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace fmr
