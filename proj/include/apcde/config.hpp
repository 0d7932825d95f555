#pragma once
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace apcde {

/// Flat key=value configuration text with dotted section names
/// (e.g. train.batch_size=64). '#' starts a comment. Values read through
/// the typed getters; unread keys are reported as errors so typos surface.
class KvConfig {
 public:
  KvConfig() = default;

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);  // flag overrides

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::string require_str(const std::string& key) const;

  /// Comma-separated integers.
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

  /// Throws ConfigError when a loaded key was never read.
  void check_all_consumed() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace apcde
