#include "domino/detail/text.hpp"

#include <charconv>
#include <cctype>
#include <cmath>
#include <string>
#include <cstdint>
#include <istream>

#include "domino/errors.hpp"

namespace domino::detail {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
}

bool TokenReader::at_end() {
  while (true) {
    const int c = in_.peek();
    if (c == std::char_traits<char>::eof()) return true;
    if (c == '\n') ++line_;
    if (!std::isspace(c)) return false;
    in_.get();
  }
}

std::string TokenReader::next() {
  if (at_end()) throw ParseError("unexpected end of input", line_);
  std::string tok;
  while (true) {
    const int c = in_.peek();
    if (c == std::char_traits<char>::eof() || std::isspace(c)) break;
    tok.push_back(static_cast<char>(in_.get()));
  }
  return tok;
}

double TokenReader::number() {
  const std::string tok = next();
  const auto v = parse_double(tok);
  if (!v) throw ParseError("expected a number, got '" + tok + "'", line_);
  return *v;
}

long long TokenReader::integer() {
  const std::string tok = next();
  const auto v = parse_int(tok);
  if (!v) throw ParseError("expected an integer, got '" + tok + "'", line_);
  return *v;
}

std::size_t TokenReader::count() {
  const long long v = integer();
  if (v < 0) throw ParseError("expected a non-negative count", line_);
  return static_cast<std::size_t>(v);
}

void TokenReader::expect(std::string_view keyword) {
  const std::string tok = next();
  if (tok != keyword) throw ParseError("expected '" + std::string(keyword) + "', got '" + tok + "'", line_);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace domino::detail
