#pragma once

// Flat `key = value` configuration files.
//
//   # comment
//   solver = krasulina, oja
//   d = 100
//
// Blank lines and lines starting with '#' are ignored; a value runs to the
// end of the line; keys may not repeat.

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kpca/data.hpp"
#include "kpca/error.hpp"

namespace kpca {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::vector<ConfigEntry> parse_config_text(const std::string& text) {
  std::vector<ConfigEntry> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key(detail::trim(line.substr(0, eq)));
    std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second)
      throw Error(Errc::InvalidConfig, "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    entries.push_back({std::move(key), std::move(value), line_no});
  }
  return entries;
}

inline std::vector<ConfigEntry> load_config_file(const std::filesystem::path& path) {
  return parse_config_text(detail::read_file(path));
}

}  // namespace kpca
