#include "core/table.hpp"

#include <fstream>
#include <sstream>

#include "core/common.hpp"

namespace wxskill {

namespace {

std::vector<std::string> split_blanks(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::string field;
    if (line[i] == '"') {
      ++i;
      while (i < line.size() && line[i] != '"') field += line[i++];
      ++i;
    } else {
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') field += line[i++];
    }
    out.push_back(std::move(field));
  }
  return out;
}

// RFC4180-ish: quoted fields may contain the delimiter and doubled quotes;
// embedded newlines are not supported.
std::vector<std::string> split_delimited(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

}  // namespace

std::optional<std::size_t> Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

std::size_t Table::require_column(std::string_view name, std::string_view context) const {
  auto c = column(name);
  if (!c)
    throw Error(ErrorKind::Parse,
                std::string(context) + ": missing required column \"" + std::string(name) + "\"");
  return *c;
}

Table parse_table(std::string_view text, const TableFormat& fmt) {
  Table t;
  std::size_t pos = 0;
  bool first = true;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    auto fields = fmt.delimiter == '\0' ? split_blanks(line) : split_delimited(line, fmt.delimiter);
    if (first) {
      first = false;
      if (fmt.has_header) {
        for (auto& f : fields) t.header.push_back(trim(f));
        continue;
      }
      for (std::size_t i = 0; i < fields.size(); ++i) t.header.push_back("V" + std::to_string(i + 1));
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write file: " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

Table read_table(const std::filesystem::path& path, const TableFormat& fmt) {
  return parse_table(read_file(path), fmt);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : width_(header.size()) { emit(header); }

void CsvWriter::add_row(std::vector<std::string> fields) {
  if (fields.size() != width_) throw Error(ErrorKind::InvalidArgument, "CsvWriter: row width mismatch");
  emit(fields);
  ++rows_;
}

void CsvWriter::emit(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ += ',';
    const auto& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      out_ += '"';
      for (char c : f) {
        if (c == '"') out_ += '"';
        out_ += c;
      }
      out_ += '"';
    } else {
      out_ += f;
    }
  }
  out_ += '\n';
}

}  // namespace wxskill
