#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rangefuse {

// Bad option/spec values. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or missing input data. CLI maps this to exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Plain-text key=value file with optional repeated [section] blocks.
///
/// Lines are `key = value`, `#` starts a comment. Keys before the first
/// section header belong to the global block. Section headers may repeat;
/// each occurrence opens a fresh block ([actor] lists, for example).
class KvFile {
 public:
  struct Block {
    std::string name;  // empty for the global block
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Whitespace-separated list of doubles, e.g. "2.0 12.0".
    std::vector<double> get_doubles(const std::string& key) const;
  };

  static KvFile parse_string(const std::string& text, const std::string& origin = "<string>");
  static KvFile parse_file(const std::string& path);

  const Block& global() const { return global_; }
  const std::vector<Block>& sections() const { return sections_; }
  std::vector<const Block*> sections(const std::string& name) const;

 private:
  Block global_;
  std::vector<Block> sections_;
};

}  // namespace rangefuse
