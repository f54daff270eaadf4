#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wsurf/errors.hpp"

namespace wsurf {

/// Round-trippable, locale-free number formatting (%.17g); NaN/inf spelled out.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

/// A CSV table built in memory and written in one go. Cells containing
/// separators or quotes are quoted.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw std::logic_error("csv row width differs from header");
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const noexcept { return rows_.size(); }
  const std::vector<std::string>& header() const noexcept { return header_; }

  /// `preamble` lines are written first, each prefixed with "# ".
  std::string str(const std::vector<std::string>& preamble = {}) const {
    std::string out;
    for (const auto& p : preamble) out += "# " + p + "\n";
    write_row(out, header_);
    for (const auto& r : rows_) write_row(out, r);
    return out;
  }

  void write(const std::filesystem::path& file, const std::vector<std::string>& preamble = {}) const {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    const std::string s = str(preamble);
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!os) throw std::runtime_error("write failed for " + file.string());
  }

private:
  static void write_row(std::string& out, const std::vector<std::string>& row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      const std::string& c = row[j];
      if (c.find_first_of(",\"\n") == std::string::npos) {
        out += c;
      } else {
        out += '"';
        for (char ch : c) {
          if (ch == '"') out += '"';
          out += ch;
        }
        out += '"';
      }
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace wsurf
