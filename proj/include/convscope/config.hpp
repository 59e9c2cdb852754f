#pragma once

#include <map>
#include <string>
#include <vector>

namespace convscope {

// Flat key=value configuration with one section per subcommand:
//
//   [train]
//   arch = presets/desk32.arch
//   epochs = 10        # comments allowed
//
// CLI flags override file values. A run's final merged config is echoed into
// its manifest JSON, and that manifest can be fed back as a config file.
class Config {
 public:
  Config() = default;

  /// Parses an INI-style file, keeping only `section`. Files ending in .json
  /// are read as run manifests (their "config" object is taken).
  static Config from_file(const std::string& path, const std::string& section);
  static Config from_text(const std::string& text, const std::string& section);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key) const;  // throws if missing
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  int64_t get_int64(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated integer list.
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace convscope
