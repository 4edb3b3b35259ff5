#include "specmatch/text_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "specmatch/error.hpp"

namespace specmatch {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::empty: return "empty";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::disconnected: return "disconnected";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

namespace text {

std::string format_double(double value, int significant_digits) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::general, significant_digits);
  if (ec != std::errc{}) throw Error(ErrorKind::io, "failed to format number");
  std::string out(buf.data(), ptr);
  if (out == "-0") out = "0";
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(line.substr(start));
      break;
    }
    parts.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view token, std::string_view context) {
  token = trim(token);
  if (token.empty()) throw Error(ErrorKind::parse, std::string(context) + ": empty field");
  // from_chars rejects a leading '+', accept it for hand-written files
  if (token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    // from_chars does not accept "inf"/"nan" spellings from every writer
    std::string lower(token);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "nan" || lower == "-nan") return std::nan("");
    if (lower == "inf" || lower == "infinity") return HUGE_VAL;
    if (lower == "-inf" || lower == "-infinity") return -HUGE_VAL;
    throw Error(ErrorKind::parse,
                std::string(context) + ": not a number '" + std::string(token) + "'");
  }
  return value;
}

long long parse_int(std::string_view token, std::string_view context) {
  token = trim(token);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
    throw Error(ErrorKind::parse,
                std::string(context) + ": not an integer '" + std::string(token) + "'");
  }
  return value;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

}  // namespace text
}  // namespace specmatch
