#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "qmeas/common.hpp"

namespace qmeas {

// Strict parser for the TOML subset the run configs use: [table] headers,
// key = value with strings, integers, floats, booleans, and flat arrays of
// those; # comments; no nesting, no multiline strings, no dotted keys.
// Anything outside the subset is a ConfigError. Keys are reported as
// "table.key"; duplicate keys are rejected.
struct TomlValue {
  std::variant<std::string, std::int64_t, double, bool,
               std::vector<std::string>, std::vector<double>>
      v;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_number() const {
    return std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v);
  }
  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_string_array() const { return std::holds_alternative<std::vector<std::string>>(v); }
  bool is_number_array() const { return std::holds_alternative<std::vector<double>>(v); }

  const std::string& as_string(const std::string& key) const;
  double as_number(const std::string& key) const;
  std::int64_t as_integer(const std::string& key) const;
  bool as_bool(const std::string& key) const;
  const std::vector<std::string>& as_string_array(const std::string& key) const;
  const std::vector<double>& as_number_array(const std::string& key) const;
};

using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::string& path);

}  // namespace qmeas
