#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wsloc {

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// ignored; list values are comma-separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<text>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<long long> get_int_list(const std::string& key) const;

  /// Keys not in `known`, for typo diagnostics.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::size_t> lines_;
  std::string source_;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const;
};

}  // namespace wsloc
