#include "qmeas/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace qmeas {

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

void skip_ws(const std::string& s, std::size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

std::string parse_basic_string(const std::string& s, std::size_t& i, std::size_t line) {
  // i points at the opening quote.
  ++i;
  std::string out;
  while (i < s.size() && s[i] != '"') {
    if (s[i] == '\\') {
      ++i;
      if (i >= s.size()) fail(line, "unterminated escape in string");
      switch (s[i]) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        default: fail(line, std::string("unsupported escape '\\") + s[i] + "'");
      }
    } else {
      out.push_back(s[i]);
    }
    ++i;
  }
  if (i >= s.size()) fail(line, "unterminated string");
  ++i;  // closing quote
  return out;
}

// A scalar token: everything up to ',', ']', '#', or end, trimmed.
std::string take_scalar_token(const std::string& s, std::size_t& i) {
  std::size_t start = i;
  while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#') ++i;
  std::size_t end = i;
  while (end > start && (s[end - 1] == ' ' || s[end - 1] == '\t')) --end;
  return s.substr(start, end - start);
}

bool parse_integer_token(const std::string& tok, std::int64_t& out) {
  if (tok.empty()) return false;
  std::size_t p = (tok[0] == '+' || tok[0] == '-') ? 1 : 0;
  if (p == tok.size()) return false;
  for (std::size_t k = p; k < tok.size(); ++k) {
    if (!std::isdigit(static_cast<unsigned char>(tok[k]))) return false;
  }
  auto res = std::from_chars(tok.data() + (tok[0] == '+' ? 1 : 0),
                             tok.data() + tok.size(), out);
  return res.ec == std::errc{} && res.ptr == tok.data() + tok.size();
}

bool parse_float_token(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  const char* begin = tok.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + tok.size();
}

TomlValue parse_scalar(const std::string& tok, std::size_t line) {
  if (tok == "true") return TomlValue{true};
  if (tok == "false") return TomlValue{false};
  std::int64_t iv = 0;
  if (parse_integer_token(tok, iv)) return TomlValue{iv};
  double dv = 0;
  if (parse_float_token(tok, dv)) return TomlValue{dv};
  fail(line, "cannot parse value '" + tok + "'");
}

TomlValue parse_value(const std::string& s, std::size_t& i, std::size_t line) {
  skip_ws(s, i);
  if (i >= s.size()) fail(line, "missing value");
  if (s[i] == '"') return TomlValue{parse_basic_string(s, i, line)};
  if (s[i] == '[') {
    ++i;
    std::vector<std::string> strings;
    std::vector<double> numbers;
    bool saw_string = false, saw_number = false;
    for (;;) {
      skip_ws(s, i);
      if (i >= s.size() || s[i] == '#') fail(line, "unterminated array");
      if (s[i] == ']') {
        ++i;
        break;
      }
      if (s[i] == '"') {
        strings.push_back(parse_basic_string(s, i, line));
        saw_string = true;
      } else {
        std::string tok = take_scalar_token(s, i);
        TomlValue v = parse_scalar(tok, line);
        if (v.is_bool()) fail(line, "boolean arrays are not supported");
        numbers.push_back(std::holds_alternative<std::int64_t>(v.v)
                              ? static_cast<double>(std::get<std::int64_t>(v.v))
                              : std::get<double>(v.v));
        saw_number = true;
      }
      if (saw_string && saw_number) fail(line, "arrays must be homogeneous");
      skip_ws(s, i);
      if (i < s.size() && s[i] == ',') {
        ++i;
        continue;
      }
      if (i < s.size() && s[i] == ']') {
        ++i;
        break;
      }
      fail(line, "expected ',' or ']' in array");
    }
    if (saw_string) return TomlValue{strings};
    return TomlValue{numbers};
  }
  std::string tok = take_scalar_token(s, i);
  return parse_scalar(tok, line);
}

}  // namespace

const std::string& TomlValue::as_string(const std::string& key) const {
  if (!is_string()) throw ConfigError("key '" + key + "' must be a string");
  return std::get<std::string>(v);
}

double TomlValue::as_number(const std::string& key) const {
  if (std::holds_alternative<std::int64_t>(v))
    return static_cast<double>(std::get<std::int64_t>(v));
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  throw ConfigError("key '" + key + "' must be a number");
}

std::int64_t TomlValue::as_integer(const std::string& key) const {
  if (!std::holds_alternative<std::int64_t>(v))
    throw ConfigError("key '" + key + "' must be an integer");
  return std::get<std::int64_t>(v);
}

bool TomlValue::as_bool(const std::string& key) const {
  if (!is_bool()) throw ConfigError("key '" + key + "' must be a boolean");
  return std::get<bool>(v);
}

const std::vector<std::string>& TomlValue::as_string_array(const std::string& key) const {
  if (!is_string_array()) throw ConfigError("key '" + key + "' must be an array of strings");
  return std::get<std::vector<std::string>>(v);
}

const std::vector<double>& TomlValue::as_number_array(const std::string& key) const {
  if (!is_number_array()) throw ConfigError("key '" + key + "' must be an array of numbers");
  return std::get<std::vector<double>>(v);
}

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::istringstream in(text);
  std::string raw;
  std::string prefix;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::size_t i = 0;
    skip_ws(raw, i);
    if (i >= raw.size() || raw[i] == '#') continue;
    if (raw[i] == '[') {
      ++i;
      if (i < raw.size() && raw[i] == '[') fail(line_no, "arrays of tables are not supported");
      std::size_t start = i;
      while (i < raw.size() && is_bare_key_char(raw[i])) ++i;
      if (i == start) fail(line_no, "empty table name");
      std::string name = raw.substr(start, i - start);
      if (i >= raw.size() || raw[i] != ']') fail(line_no, "malformed table header");
      ++i;
      skip_ws(raw, i);
      if (i < raw.size() && raw[i] != '#') fail(line_no, "trailing content after table header");
      prefix = name + ".";
      continue;
    }
    std::size_t start = i;
    while (i < raw.size() && is_bare_key_char(raw[i])) ++i;
    if (i == start) fail(line_no, "expected key");
    std::string key = prefix + raw.substr(start, i - start);
    skip_ws(raw, i);
    if (i >= raw.size() || raw[i] != '=') fail(line_no, "expected '=' after key");
    ++i;
    TomlValue value = parse_value(raw, i, line_no);
    skip_ws(raw, i);
    if (i < raw.size() && raw[i] != '#') fail(line_no, "trailing content after value");
    if (!table.emplace(key, std::move(value)).second)
      fail(line_no, "duplicate key '" + key + "'");
  }
  return table;
}

TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml(buf.str());
}

}  // namespace qmeas
