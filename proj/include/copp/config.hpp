#pragma once

// Flat "key = value" configuration with namespaced keys (sampler.*, arkp.*,
// cora.*, train.*, data.*). Only keys present in the defaults are accepted;
// later assignments override earlier ones.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace copp {

class Config {
 public:
  /// Every known key with its desk-scale default.
  static Config defaults();

  /// Reads "key = value" lines; '#' starts a comment.
  void merge_file(const std::filesystem::path& path);
  void merge_text(std::string_view text, const std::string& origin = "<text>");
  /// Accepts "key=value".
  void merge_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace copp
