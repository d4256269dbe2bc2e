#pragma once

#include <boost/uuid/detail/sha1.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "polylab/core/error.hpp"
#include "polylab/io/config.hpp"
#include "polylab/io/csv.hpp"

namespace polylab {

inline std::string sha1_hex(const std::string& bytes) {
  boost::uuids::detail::sha1 h;
  h.process_bytes(bytes.data(), bytes.size());
  boost::uuids::detail::sha1::digest_type d;
  h.get_digest(d);
  char buf[41];
  for (int i = 0; i < 5; ++i) std::snprintf(buf + 8 * i, 9, "%08x", d[i]);
  return std::string(buf, 40);
}

// Hash of a git blob object: sha1("blob <size>\0" + content), as `git hash-object` prints it.
inline std::string git_blob_hash(const std::string& content) {
  std::string obj = "blob " + std::to_string(content.size());
  obj.push_back('\0');
  obj += content;
  return sha1_hex(obj);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// Output directory of one invocation: <out.dir>/<subcommand>-<UTC stamp>-s<seed>, suffixed on collision.
class RunDir {
 public:
  RunDir(const std::filesystem::path& root, const std::string& subcommand, std::uint64_t seed,
         const std::string& stamp = utc_stamp()) {
    const std::string base = subcommand + "-" + stamp + "-s" + std::to_string(seed);
    std::filesystem::create_directories(root);
    path_ = root / base;
    for (int k = 1; std::filesystem::exists(path_); ++k) path_ = root / (base + "-" + std::to_string(k));
    std::filesystem::create_directories(path_);
    stamp_ = stamp;
  }

  // Exactly this directory; it must be new or empty.
  static RunDir at(const std::filesystem::path& dir, const std::string& stamp = utc_stamp()) {
    if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir))
      throw ConfigError("run directory is not empty: " + dir.string());
    std::filesystem::create_directories(dir);
    RunDir r;
    r.path_ = dir;
    r.stamp_ = stamp;
    return r;
  }

  const std::filesystem::path& path() const { return path_; }
  const std::vector<std::string>& files() const { return files_; }
  const std::string& stamp() const { return stamp_; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(path_ / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (path_ / name).string());
    out << content;
    files_.push_back(name);
  }
  void write(const std::string& name, const CsvTable& t) { write(name, t.str()); }

 private:
  RunDir() = default;
  std::filesystem::path path_;
  std::string stamp_;
  std::vector<std::string> files_;
};

inline std::string config_hash(const Config& c) { return sha1_hex(c.canonical()); }

// Manifest: config echo, then one `<git blob hash>  <file>` line per output. The timestamp lives
// here and in the directory name only.
inline void write_manifest(RunDir& dir, const std::string& subcommand, const Config& cfg) {
  std::ostringstream os;
  os << "# subcommand " << subcommand << "\n# created " << dir.stamp() << "\n# config\n" << cfg.canonical()
     << "# outputs\n";
  for (const auto& f : dir.files()) os << git_blob_hash(read_file(dir.path() / f)) << "  " << f << "\n";
  dir.write("manifest.txt", os.str());
}

struct Summary {
  std::string subcommand;
  std::string config_hash;
  bool pass = false;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();

  std::string json() const {
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand;
    j["config_hash"] = config_hash;
    j["pass"] = pass;
    j["metrics"] = metrics;
    return j.dump(2) + "\n";
  }
};

}  // namespace polylab
