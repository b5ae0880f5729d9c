#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace domino::detail {

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Strict parse: whole (trimmed) field must be a finite decimal number.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

// Whitespace-separated token stream with line tracking, for the structured
// text model files. Errors throw ParseError carrying the current line.
class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string next();
  bool at_end();
  double number();
  long long integer();
  std::size_t count();
  void expect(std::string_view keyword);
  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace domino::detail
