#include "reenact/config.hpp"

#include "reenact/image_io.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

namespace reenact {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + text + "'");
  }
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || trim(t.substr(0, eq)).empty())
      throw ConfigError("config line " + std::to_string(no) + " is not key=value");
    c.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_text(path)); }

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void Config::set(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  values_[key] = buf;
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

int Config::get(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

bool Config::get(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "on") return true;
  if (it->second == "false" || it->second == "0" || it->second == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + it->second + "'");
}

std::pair<double, double> Config::get_range(const std::string& key, std::pair<double, double> fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto comma = it->second.find(',');
  if (comma == std::string::npos) throw ConfigError("config key '" + key + "' expects lo,hi");
  const double lo = parse_double(key, trim(it->second.substr(0, comma)));
  const double hi = parse_double(key, trim(it->second.substr(comma + 1)));
  if (lo > hi) throw ConfigError("config key '" + key + "' has lo > hi");
  return {lo, hi};
}

}  // namespace reenact
