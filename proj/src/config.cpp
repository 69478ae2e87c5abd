#include "rangefuse/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rangefuse {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

bool KvFile::Block::has(const std::string& key) const { return values.count(key) > 0; }

std::string KvFile::Block::get(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

std::string KvFile::Block::require(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) {
    throw ConfigError("missing required key '" + key + "'" +
                      (name.empty() ? "" : " in [" + name + "]"));
  }
  return it->second;
}

double KvFile::Block::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("key '" + key + "' is not a number: '" + it->second + "'");
  }
  return v;
}

int KvFile::Block::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, static_cast<double>(fallback));
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("key '" + key + "' is not an integer");
  }
  return i;
}

bool KvFile::Block::get_bool(const std::string& key, bool fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<double> KvFile::Block::get_doubles(const std::string& key) const {
  std::vector<double> out;
  auto it = values.find(key);
  if (it == values.end()) return out;
  std::istringstream iss(it->second);
  double v;
  while (iss >> v) out.push_back(v);
  if (!iss.eof()) throw ConfigError("key '" + key + "' has non-numeric entries");
  return out;
}

KvFile KvFile::parse_string(const std::string& text, const std::string& origin) {
  KvFile out;
  Block* current = &out.global_;
  std::istringstream iss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      }
      out.sections_.push_back(Block{trim(line.substr(1, line.size() - 2)), {}});
      current = &out.sections_.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    current->values[key] = value;
  }
  return out;
}

KvFile KvFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

std::vector<const KvFile::Block*> KvFile::sections(const std::string& name) const {
  std::vector<const Block*> out;
  for (const auto& b : sections_) {
    if (b.name == name) out.push_back(&b);
  }
  return out;
}

}  // namespace rangefuse
