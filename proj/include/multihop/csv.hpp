#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace multihop {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_line(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Whole file as rows of fields. Blank lines are skipped; CR is stripped.
/// `lines` receives the 1-based source line of each row.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path, char delim = ',',
                                                      std::vector<std::size_t>* lines = nullptr) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_line(line, delim));
    if (lines) lines->push_back(number);
  }
  return rows;
}

inline std::optional<double> try_parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline double parse_double(std::string_view s, const std::string& where) {
  auto v = try_parse_double(s);
  if (!v) throw FormatError(where + ": expected a number, got '" + std::string(s) + "'");
  return *v;
}

inline long parse_int(std::string_view s, const std::string& where) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(where + ": expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace multihop
