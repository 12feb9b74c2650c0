#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wxskill {

// A measurement cell; std::nullopt is an absent (missing or removed) value.
using Value = std::optional<double>;

using Date = std::chrono::sys_days;

enum class ErrorKind {
  InvalidArgument,
  Io,
  Parse,
  Config,
  Compute,
  Bundle,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Non-fatal findings collected by a stage and surfaced in reports / on stderr.
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

/// Parses an ISO calendar date (YYYY-MM-DD). Returns nullopt on malformed input.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);
unsigned month_of(Date d);

/// Shortest round-trip decimal representation; the single formatting path
/// for every floating value written to disk, so bundles are byte-stable.
std::string format_number(double v);
std::string format_value(const Value& v);

/// Strict numeric parse of a whole cell (surrounding blanks allowed).
std::optional<double> parse_number(std::string_view text);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

}  // namespace wxskill
