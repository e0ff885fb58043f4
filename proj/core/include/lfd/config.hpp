#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lfd {

// Flat key/value view of an INI-style configuration file. Section names are
// folded into the key as "section.key".
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile load(const std::filesystem::path& path);
  static ConfigFile parse(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Whitespace- or comma-separated list of numbers.
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Path the file was loaded from (empty when parsed from a string).
  const std::filesystem::path& source() const { return source_; }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path source_;
};

}  // namespace lfd
