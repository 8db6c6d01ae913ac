#pragma once

// Locale-independent CSV output and the config hash stamped on every file.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fluctlab/error.hpp"

namespace fluctlab {

// Shortest form that round-trips is not used on purpose: 17 significant
// digits keep files identical across standard libraries.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int k = 15; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

using Cell = std::variant<std::string, double, std::int64_t>;

class CsvWriter {
 public:
  // The first line is a comment naming the producing config hash.
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
            const std::string& config_hash)
      : out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open '" + path.string() + "' for writing");
    out_ << "# config_hash=" << config_hash << '\n';
    for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
    out_ << '\n';
  }

  void row(const std::vector<Cell>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) out_ << ',';
      std::visit(
          [this](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              out_ << format_double(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
              out_ << quote(v);
            } else {
              out_ << v;
            }
          },
          cells[k]);
    }
    out_ << '\n';
  }

 private:
  // Quoted with doubled inner quotes when the field holds a comma, quote or newline.
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + '"';
  }

  std::ofstream out_;
};

}  // namespace fluctlab
