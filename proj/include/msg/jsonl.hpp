#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msg/errors.hpp"
#include "msg/types.hpp"

namespace msg::jsonl {

namespace fs = std::filesystem;

// Streams one parsed JSON object per non-empty line. `on_line` receives the
// 1-based line number; parse failures surface as MalformedFile with that line.
inline void for_each_line(const fs::path& path,
                          const std::function<void(size_t, const Json&)>& on_line) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedFile(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    on_line(lineno, j);
  }
}

inline std::vector<Json> read_all(const fs::path& path) {
  std::vector<Json> out;
  for_each_line(path, [&](size_t, const Json& j) { out.push_back(j); });
  return out;
}

// Writer with atomic replace: lines accumulate into `<path>.tmp` and the file
// is renamed into place on commit. An optional meta line carries provenance.
class Writer {
public:
  explicit Writer(fs::path path) : path_(std::move(path)), tmp_(path_) {
    tmp_ += ".tmp";
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    out_.open(tmp_, std::ios::trunc);
    if (!out_) throw IoError("cannot open " + tmp_.string() + " for writing");
  }

  ~Writer() {
    if (out_.is_open()) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }

  void write_meta(const Json& meta) {
    Json line = Json{{"kind", "meta"}};
    line.update(meta);
    out_ << line.dump() << "\n";
  }

  void write(const Json& j) { out_ << j.dump() << "\n"; }

  void commit() {
    out_.close();
    fs::rename(tmp_, path_);
  }

private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
};

inline bool is_meta_line(const Json& j) {
  return j.is_object() && j.value("kind", std::string{}) == "meta";
}

inline void write_json_file(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

inline Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedFile(path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace msg::jsonl
