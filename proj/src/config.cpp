#include "geoagent/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "geoagent/errors.hpp"

namespace geoagent {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (cfg.values_.count(key)) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
    cfg.lines_[key] = line_no;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  used_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = lookup(key);
  return v ? *v : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  if (!parse_number(*v, out)) throw ConfigError(source_ + ": " + key + " must be an integer, got '" + *v + "'");
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  if (!parse_number(*v, out)) {
    throw ConfigError(source_ + ": " + key + " must be an unsigned integer, got '" + *v + "'");
  }
  return out;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  double out = 0.0;
  if (!parse_number(*v, out)) throw ConfigError(source_ + ": " + key + " must be a number, got '" + *v + "'");
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ConfigError(source_ + ": " + key + " must be true or false, got '" + *v + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  std::vector<int> out;
  std::istringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    int x = 0;
    if (!parse_number(trim(item), x)) {
      throw ConfigError(source_ + ": " + key + " must be a comma-separated integer list, got '" + *v + "'");
    }
    out.push_back(x);
  }
  if (out.empty()) throw ConfigError(source_ + ": " + key + " is empty");
  return out;
}

void KeyValueConfig::reject_unknown() const {
  for (const auto& [key, value] : values_) {
    if (!used_.count(key)) {
      throw ConfigError(source_ + ":" + std::to_string(lines_.count(key) ? lines_.at(key) : 0) +
                        ": unknown key '" + key + "'");
    }
  }
}

}  // namespace geoagent
