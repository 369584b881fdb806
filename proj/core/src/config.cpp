#include "wsloc/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "text_util.hpp"
#include "wsloc/types.hpp"

namespace wsloc {

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig config;
  config.source_ = source;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key(text::trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    if (config.values_.count(key)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    config.values_[key] = std::string(text::trim(line.substr(eq + 1)));
    config.lines_[key] = line_no;
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

void KeyValueConfig::fail(const std::string& key, const std::string& what) const {
  auto it = lines_.find(key);
  throw ParseError(source_, it == lines_.end() ? 0 : it->second, key + ": " + what);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto v = text::parse_double(it->second);
  if (!v) fail(key, "expected a number, got '" + it->second + "'");
  return *v;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto v = text::parse_int(it->second);
  if (!v) fail(key, "expected an integer, got '" + it->second + "'");
  return *v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(key, "expected true or false, got '" + v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) return out;
  for (const auto& item : text::split(it->second)) {
    const auto trimmed = text::trim(item);
    if (trimmed.empty()) fail(key, "empty list item");
    out.emplace_back(trimmed);
  }
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    const auto v = text::parse_double(item);
    if (!v) fail(key, "expected numbers, got '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<long long> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<long long> out;
  for (const auto& item : get_list(key)) {
    const auto v = text::parse_int(item);
    if (!v) fail(key, "expected integers, got '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> KeyValueConfig::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) out.push_back(key);
  }
  return out;
}

std::string KeyValueConfig::to_string() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

}  // namespace wsloc
