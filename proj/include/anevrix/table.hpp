#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace anevrix {

// Header-addressed delimited text table (CSV or TSV). Fields are not quoted;
// none of the file schemas in this project need embedded delimiters.
class Table {
 public:
  Table() = default;
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  static Table parse(std::string_view text, char delimiter = ',', std::string_view source = "<memory>");
  static Table read(const std::filesystem::path& path, char delimiter = ',');

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  std::size_t row_count() const { return rows_.size(); }

  std::optional<std::size_t> column(std::string_view name) const;
  // Throws ValidationError naming `source` when the column is absent.
  std::size_t require_column(std::string_view name) const;

  // Source line number (1-based, header is line 1) of a data row.
  std::size_t line_of(std::size_t row) const { return lines_[row]; }
  const std::string& source() const { return source_; }

  void add_row(std::vector<std::string> row);

  std::string str(char delimiter = ',') const;
  void write(const std::filesystem::path& path, char delimiter = ',') const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> lines_;
  std::string source_;
};

std::vector<std::string> split(std::string_view line, char delimiter);
std::string_view trim(std::string_view s);

// Strict numeric parsing; `what` names the field in error messages.
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

// Shortest round-trip decimal representation.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace anevrix
