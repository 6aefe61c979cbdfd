#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace hardmine {

// Flat key=value experiment config. '#' starts a comment; blank lines are
// ignored. One file drives every subcommand; each reads the keys it needs.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text,
                               const std::string& source = "<config>");

  // Documented key set; anything else is rejected at parse time.
  static const std::set<std::string>& known_keys();

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  // Missing required key -> ConfigError naming the key.
  std::string require(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;
  uint32_t get_u32(const std::string& key, uint32_t def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Sorted key=value lines; hashed into the run manifest.
  std::string canonical() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string source_ = "<config>";
};

uint64_t fnv1a64(const std::string& data);

}  // namespace hardmine
