#include "fmr/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fmr/errors.hpp"

namespace fmr {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

std::string quote_cell(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvTable parse_numeric_csv(std::string_view text, const std::string& source) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!trim(line).empty()) lines.push_back(line);
    start = nl + 1;
  }
  if (lines.empty()) throw DataError(source + ": empty file, expected a header row");

  CsvTable table;
  for (auto h : split_commas(lines[0])) {
    if (h.size() >= 2 && h.front() == '"' && h.back() == '"') h = h.substr(1, h.size() - 2);
    table.header.emplace_back(h);
  }
  const auto cols = static_cast<Eigen::Index>(table.header.size());
  const auto rows = static_cast<Eigen::Index>(lines.size() - 1);
  table.values.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto cells = split_commas(lines[static_cast<std::size_t>(r + 1)]);
    if (static_cast<Eigen::Index>(cells.size()) != cols)
      throw DataError(source + ": row " + std::to_string(r + 1) + " has " + std::to_string(cells.size()) +
                      " columns, header has " + std::to_string(cols));
    for (Eigen::Index c = 0; c < cols; ++c) {
      const std::string_view cell = cells[static_cast<std::size_t>(c)];
      const std::string where = " at row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1) +
                                " (" + table.header[static_cast<std::size_t>(c)] + ")";
      if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan")
        throw DataError(source + ": missing value" + where);
      double v = 0;
      const char* first = cell.data();
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw DataError(source + ": non-numeric value '" + std::string(cell) + "'" + where);
      table.values(r, c) = v;
    }
  }
  return table;
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
  return parse_numeric_csv(read_file(path), path.string());
}

void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols())
    throw ConfigError("header has " + std::to_string(header.size()) + " names for " +
                      std::to_string(values.cols()) + " columns");
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + quote_cell(header[c]);
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  write_file(path, out);
}

void write_text_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + quote_cell(header[c]);
  out += '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw ConfigError("text row width differs from header");
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + quote_cell(row[c]);
    out += '\n';
  }
  write_file(path, out);
}

std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    if (!out.emplace(key, value).second)
      throw ConfigError(source + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_checksum(const std::filesystem::path& path) { return hex64(fnv1a64(read_file(path))); }

}  // namespace fmr
