#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace geoagent {

/// Flat `key = value` text, one pair per line, `#` starts a comment.
/// Getters record which keys were read so leftovers can be reported.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ConfigError naming the first key no getter asked for.
  void reject_unknown() const;

 private:
  const std::string* lookup(const std::string& key) const;

  std::string source_;
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  mutable std::set<std::string> used_;
};

}  // namespace geoagent
