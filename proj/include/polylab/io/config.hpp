#pragma once

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"

namespace polylab {

// Flat key=value configuration. Lines are `key = value`, `# comment`, or `[section]`; a key
// inside a section is read as `section.key`. Blank values are not allowed.
class Config {
 public:
  static const std::vector<std::string>& valid_keys() {
    static const std::vector<std::string> keys = {
        "grid.L",     "grid.N",     "grid.d",           "model.beta", "model.kernel", "model.phi_width",
        "model.q0",   "model.q0_width", "time.dt",      "time.T",     "mc.realizations", "mc.seed",
        "out.dir",    "threads"};
    return keys;
  }

  static std::string valid_key_list() {
    std::string s;
    for (const auto& k : valid_keys()) s += (s.empty() ? "" : ", ") + k;
    return s;
  }

  // Values set before parsing: subcommand defaults.
  void set_default(const std::string& key, const std::string& value) {
    require_known(key, "default");
    values_[key] = value;
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "override") {
    require_known(key, where);
    values_[key] = value;
  }

  void parse(std::istream& in, const std::string& source) {
    std::string line, section;
    std::map<std::string, int> seen;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::string where = source + ":" + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (!section.empty()) key = section + "." + key;
      if (value.empty()) throw ConfigError(where + ": empty value for " + key);
      require_known(key, where);
      if (seen.count(key)) throw ConfigError(where + ": " + key + " already set on line " + std::to_string(seen[key]));
      seen[key] = lineno;
      values_[key] = value;
    }
  }

  void load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing value for " + key);
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& s = str(key);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
      throw ConfigError(key + ": not a finite number: '" + s + "'");
    return v;
  }

  std::int64_t integer(const std::string& key) const {
    const std::string& s = str(key);
    // accept 1e4-style integers as well
    const double v = real(key);
    if (v != std::floor(v) || std::abs(v) > 9.0e15) throw ConfigError(key + ": not an integer: '" + s + "'");
    return static_cast<std::int64_t>(v);
  }

  std::uint64_t seed(const std::string& key) const {
    const std::string& s = str(key);
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(key + ": not an unsigned integer: '" + s + "'");
    return v;
  }

  // Sorted key=value lines: the echo written to the manifest and the input of config_hash.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static void require_known(const std::string& key, const std::string& where) {
    const auto& k = valid_keys();
    if (std::find(k.begin(), k.end(), key) == k.end())
      throw ConfigError(where + ": unknown key '" + key + "'; valid keys: " + valid_key_list());
  }

  std::map<std::string, std::string> values_;
};

}  // namespace polylab
