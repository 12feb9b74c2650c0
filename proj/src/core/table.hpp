#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wxskill {

// Delimited text table. Rows are stored as strings; typed access is the
// caller's concern.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  /// Like column() but throws a Parse error naming the missing column.
  std::size_t require_column(std::string_view name, std::string_view context) const;
};

struct TableFormat {
  char delimiter = ',';        // '\0' selects runs of blanks
  bool has_header = true;      // when false, columns are named V1..Vn
};

Table parse_table(std::string_view text, const TableFormat& fmt = {});
Table read_table(const std::filesystem::path& path, const TableFormat& fmt = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Comma-separated writer; quotes a field only when it has to.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(std::vector<std::string> fields);
  std::string str() const { return out_; }
  std::size_t row_count() const { return rows_; }

 private:
  void emit(const std::vector<std::string>& fields);
  std::size_t width_;
  std::size_t rows_ = 0;
  std::string out_;
};

}  // namespace wxskill
