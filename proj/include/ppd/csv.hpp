#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppd/error.hpp"

namespace ppd {

// Locale-independent float formatting: shortest round-trip, '.' decimal point.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Comma separator, LF line endings, one header row. Rows accumulate in
// memory; save() goes through the atomic artifact writer.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (size_t i = 0; i < header.size(); ++i) {
      if (i) buffer_ += ',';
      buffer_ += header[i];
    }
    buffer_ += '\n';
  }

  void cell(const std::string& v) { sep(); buffer_ += v; }
  void cell(const char* v) { sep(); buffer_ += v; }
  void cell(double v) { sep(); buffer_ += format_double(v); }
  void cell(int64_t v) { sep(); buffer_ += std::to_string(v); }
  void cell(int v) { sep(); buffer_ += std::to_string(v); }
  void cell(uint64_t v) { sep(); buffer_ += std::to_string(v); }

  void end_row() {
    buffer_ += '\n';
    first_ = true;
  }

  const std::string& str() const { return buffer_; }
  void save(const std::filesystem::path& path) const;

 private:
  void sep() {
    if (!first_) buffer_ += ',';
    first_ = false;
  }

  std::string buffer_;
  bool first_ = true;
};

}  // namespace ppd
