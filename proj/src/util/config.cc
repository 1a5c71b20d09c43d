// SPDX-License-Identifier: Apache-2.0

#include "util/config.h"

#include <cstdlib>
#include <sstream>

#include "util/common.h"
#include "util/io.h"

namespace twopass {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  return from_string(read_text_file(path));
}

Config Config::from_string(const std::string& text) {
  Config c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    check_config(eq != std::string::npos,
                 "config line " + std::to_string(lineno) + " is not `key = value`: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    check_config(!key.empty(), "empty key at config line " + std::to_string(lineno));
    c.kv_[key] = value;
  }
  return c;
}

std::string Config::get_str(const std::string& key) const {
  auto it = kv_.find(key);
  check_config(it != kv_.end(), "missing required config key: " + key);
  return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

double Config::get_double(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  char* end = nullptr;
  double v = std::strtod(it->second.c_str(), &end);
  check_config(end && *end == '\0', "config key " + key + " is not a number: " + it->second);
  return v;
}

int Config::get_int(const std::string& key, int dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  char* end = nullptr;
  long v = std::strtol(it->second.c_str(), &end, 10);
  check_config(end && *end == '\0', "config key " + key + " is not an integer: " + it->second);
  return static_cast<int>(v);
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto it = kv_.find(key);
  if (it == kv_.end()) return out;
  const std::string& raw = it->second;
  if (raw.find(',') != std::string::npos) {
    size_t start = 0;
    while (start <= raw.size()) {
      size_t comma = raw.find(',', start);
      if (comma == std::string::npos) comma = raw.size();
      std::string item = trim(raw.substr(start, comma - start));
      if (!item.empty()) out.push_back(item);
      start = comma + 1;
    }
  } else {
    std::istringstream is(raw);
    std::string tok;
    while (is >> tok) out.push_back(tok);
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_list(key)) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    check_config(end && *end == '\0', "config key " + key + " has non-numeric item: " + s);
    out.push_back(v);
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_double_list(key)) out.push_back(static_cast<int>(v));
  return out;
}

std::string Config::echo() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.kv_) kv_[k] = v;
}

}  // namespace twopass
