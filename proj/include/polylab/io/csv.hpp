#pragma once

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"

namespace polylab {

// Round-trip formatting: 17 significant digits, locale independent.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t rows() const { return rows_.size(); }

  const std::vector<std::string>& row(std::size_t i) const { return rows_.at(i); }
  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i] == name) return i;
    throw ConfigError("missing column '" + name + "'");
  }
  double number(std::size_t r, const std::string& name) const { return std::stod(rows_.at(r)[column(name)]); }

  void add(std::vector<std::string> cells) {
    if (cells.size() != columns_.size())
      throw InvariantError("csv row has " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(columns_.size()));
    rows_.push_back(std::move(cells));
  }
  void add_numbers(std::initializer_list<double> xs) {
    std::vector<std::string> cells;
    for (double x : xs) cells.push_back(fmt17(x));
    add(std::move(cells));
  }

  void write(std::ostream& os) const {
    line(os, columns_);
    for (const auto& r : rows_) line(os, r);
  }
  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }
  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    write(f);
  }

 private:
  static void line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  }

  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

// Minimal reader for the tables written above (no quoting).
inline CsvTable read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read " + path);
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  std::string line;
  if (!std::getline(f, line)) throw ConfigError(path + " is empty");
  CsvTable t(split(line));
  while (std::getline(f, line))
    if (!line.empty()) t.add(split(line));
  return t;
}

}  // namespace polylab
