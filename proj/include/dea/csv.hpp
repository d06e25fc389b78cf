#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dea/core.hpp"
#include "dea/errors.hpp"

namespace dea::csv {

/// Column-oriented numeric table with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return columns[i];
    throw ValidationError("csv: missing column '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& h : header)
      if (h == name) return true;
    return false;
  }
};

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}
}  // namespace detail

inline Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open " + path.string());
  Table tab;
  std::string line;
  while (std::getline(in, line) && detail::trim(line).empty()) {
  }
  if (detail::trim(line).empty()) throw ValidationError("csv: empty file " + path.string());
  tab.header = detail::split(line);
  tab.columns.resize(tab.header.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line);
    if (cells.size() != tab.header.size())
      throw ValidationError("csv: " + path.string() + ":" + std::to_string(lineno) + ": wrong number of fields");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      char* end = nullptr;
      const double x = std::strtod(cells[i].c_str(), &end);
      if (end == cells[i].c_str() || *end != '\0')
        throw ValidationError("csv: " + path.string() + ":" + std::to_string(lineno) + ": not a number '" + cells[i] + "'");
      tab.columns[i].push_back(x);
    }
  }
  if (tab.rows() == 0) throw ValidationError("csv: no data rows in " + path.string());
  return tab;
}

inline void write(const std::filesystem::path& path, const Table& tab) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw ValidationError("csv: cannot write " + path.string());
  for (std::size_t i = 0; i < tab.header.size(); ++i) std::fprintf(f, "%s%s", i ? "," : "", tab.header[i].c_str());
  std::fputc('\n', f);
  for (std::size_t r = 0; r < tab.rows(); ++r) {
    for (std::size_t c = 0; c < tab.columns.size(); ++c) std::fprintf(f, "%s%.17g", c ? "," : "", tab.columns[c][r]);
    std::fputc('\n', f);
  }
  std::fclose(f);
}

/// `t,value` two-column form.
inline void write_series(const std::filesystem::path& path, const TimeSeries& ts) {
  write(path, Table{{"t", "value"}, {ts.t(), ts.v()}});
}

inline TimeSeries read_series(const std::filesystem::path& path, const std::string& value_column = "value") {
  const auto tab = read(path);
  return {tab.column("t"), tab.column(value_column)};
}

}  // namespace dea::csv
