#pragma once

#include "reenact/core.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>

namespace reenact {

// Flat key=value configuration. Lines starting with '#' are comments.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);
  std::string to_text() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);
  // Keys from other override ours.
  void merge(const Config& other);

  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  bool get(const std::string& key, bool fallback) const;
  std::pair<double, double> get_range(const std::string& key, std::pair<double, double> fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace reenact
