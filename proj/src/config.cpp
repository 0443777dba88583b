#include "qmeas/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "qmeas/hilbert.hpp"

namespace qmeas {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(trim(s.substr(start)));
      return out;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

double parse_real(const std::string& tok, const std::string& ctx) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size())
    throw ConfigError("state '" + ctx + "': cannot parse number '" + tok + "'");
  return v;
}

std::uint64_t parse_seed(const std::string& tok, const std::string& ctx) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("state '" + ctx + "': seed must be a nonnegative integer, got '" + tok + "'");
  return std::strtoull(tok.c_str(), nullptr, 10);
}

Operator make_atomic_state(const std::string& spec_string, const HilbertSpec& space) {
  std::string s = trim(spec_string);
  std::string kind = s, arg;
  if (std::size_t pos = s.find(':'); pos != std::string::npos) {
    kind = trim(s.substr(0, pos));
    arg = trim(s.substr(pos + 1));
  }
  if (kind == "maxmixed") {
    if (!arg.empty()) throw ConfigError("state 'maxmixed' takes no argument");
    return max_mixed(space);
  }
  if (arg.empty()) throw ConfigError("state '" + s + "': missing argument after ':'");
  if (kind == "number") {
    double n = parse_real(arg, s);
    int ni = static_cast<int>(n);
    if (ni != n || ni < 0) throw ConfigError("state '" + s + "': occupation must be a nonnegative integer");
    return number_state(ni, space);
  }
  if (kind == "coherent") {
    auto parts = split(arg, ',');
    if (parts.size() > 2) throw ConfigError("state '" + s + "': expected re[,im]");
    double re = parse_real(parts[0], s);
    double im = parts.size() == 2 ? parse_real(parts[1], s) : 0.0;
    return coherent_state(Complex(re, im), space);
  }
  if (kind == "thermal") return thermal_state(parse_real(arg, s), space);
  if (kind == "random") return random_density(parse_seed(arg, s), space);
  if (kind == "randdiag") return random_diagonal_density(parse_seed(arg, s), space);
  throw ConfigError("unknown state kind '" + kind + "'");
}

void check_keys(const TomlTable& table, const std::string& prefix,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : table) {
    if (key.rfind(prefix, 0) != 0) continue;
    std::string leaf = key.substr(prefix.size());
    if (leaf.find('.') != std::string::npos) continue;
    if (!allowed.count(leaf)) throw ConfigError("unknown key '" + key + "'");
  }
}

const TomlValue* find(const TomlTable& table, const std::string& key) {
  auto it = table.find(key);
  return it == table.end() ? nullptr : &it->second;
}

double get_number(const TomlTable& t, const std::string& key, double fallback) {
  const TomlValue* v = find(t, key);
  return v ? v->as_number(key) : fallback;
}

std::int64_t get_integer(const TomlTable& t, const std::string& key, std::int64_t fallback) {
  const TomlValue* v = find(t, key);
  return v ? v->as_integer(key) : fallback;
}

double param(const TomlTable& params, const std::string& name,
             const std::map<std::string, double>& overrides, double fallback) {
  if (auto it = overrides.find(name); it != overrides.end()) return it->second;
  return get_number(params, "params." + name, fallback);
}

void require_known_params(const TomlTable& params, std::set<std::string> allowed) {
  check_keys(params, "params.", allowed);
}

void require_known_overrides(const std::map<std::string, double>& overrides,
                             const std::set<std::string>& sweepable,
                             const std::string& model) {
  for (const auto& [name, value] : overrides) {
    (void)value;
    if (!sweepable.count(name))
      throw ConfigError("model '" + model + "' cannot sweep parameter '" + name + "'");
  }
}

}  // namespace

Operator make_state(const std::string& spec_string, const HilbertSpec& space) {
  std::string s = trim(spec_string);
  if (s.rfind("mixed:", 0) == 0) {
    auto parts = split(s, ';');
    if (parts.size() != 3)
      throw ConfigError("state '" + s + "': expected mixed:p;specA;specB");
    std::string weight_tok = trim(parts[0].substr(6));
    double p = parse_real(weight_tok, s);
    if (p < 0.0 || p > 1.0) throw ConfigError("state '" + s + "': weight must lie in [0,1]");
    Operator a = make_atomic_state(parts[1], space);
    Operator b = make_atomic_state(parts[2], space);
    return p * a + (1.0 - p) * b;
  }
  return make_atomic_state(s, space);
}

RunConfig load_run_config(const std::string& path) {
  TomlTable table = parse_toml_file(path);
  RunConfig config;

  check_keys(table, "", {"model", "pairs"});
  check_keys(table, "sweep.", {"param", "values"});
  check_keys(table, "output.", {"path", "format"});
  check_keys(table, "tolerances.", {"conservation", "certificate", "norm", "deficit"});
  check_keys(table, "expect.", {"ban", "conservation", "certificate", "deficit"});
  for (const auto& [key, value] : table) {
    (void)value;
    std::size_t dot = key.find('.');
    if (dot == std::string::npos) continue;
    std::string section = key.substr(0, dot);
    if (section != "params" && section != "sweep" && section != "output" &&
        section != "tolerances" && section != "expect")
      throw ConfigError("unknown section '[" + section + "]'");
  }

  const TomlValue* model = find(table, "model");
  if (!model) throw ConfigError("missing required key 'model'");
  config.model = model->as_string("model");

  const TomlValue* pairs = find(table, "pairs");
  if (!pairs) throw ConfigError("missing required key 'pairs'");
  for (const std::string& entry : pairs->as_string_array("pairs")) {
    auto sides = split(entry, '|');
    if (sides.size() != 2)
      throw ConfigError("pair '" + entry + "': expected 'rho | sigma'");
    config.pairs.push_back(StatePair{sides[0], sides[1]});
  }
  if (config.pairs.empty()) throw ConfigError("'pairs' must list at least one state pair");

  for (const auto& [key, value] : table) {
    if (key.rfind("params.", 0) == 0) config.params.emplace(key, value);
  }

  if (const TomlValue* p = find(table, "sweep.param")) {
    config.sweep_param = p->as_string("sweep.param");
    const TomlValue* vals = find(table, "sweep.values");
    if (!vals) throw ConfigError("[sweep] needs 'values'");
    config.sweep_values = vals->as_number_array("sweep.values");
    if (config.sweep_values.empty()) throw ConfigError("sweep.values must not be empty");
  } else if (find(table, "sweep.values")) {
    throw ConfigError("[sweep] needs 'param'");
  }

  if (const TomlValue* p = find(table, "output.path")) config.output_path = p->as_string("output.path");
  if (const TomlValue* p = find(table, "output.format")) {
    config.output_format = p->as_string("output.format");
    if (config.output_format != "json" && config.output_format != "csv")
      throw ConfigError("output.format must be 'json' or 'csv'");
  }

  for (const char* name : {"conservation", "certificate", "norm", "deficit"}) {
    if (const TomlValue* p = find(table, std::string("tolerances.") + name)) {
      double v = p->as_number(std::string("tolerances.") + name);
      if (v <= 0) throw ConfigError(std::string("tolerances.") + name + " must be positive");
      config.tolerances[name] = v;
    }
  }
  for (const char* name : {"ban", "conservation", "certificate"}) {
    if (const TomlValue* p = find(table, std::string("expect.") + name))
      config.expect_bool[name] = p->as_bool(std::string("expect.") + name);
  }
  if (const TomlValue* p = find(table, "expect.deficit"))
    config.expect_num["deficit"] = p->as_number("expect.deficit");

  return config;
}

std::vector<ModelBundle> build_model(const RunConfig& config,
                                     const std::map<std::string, double>& overrides) {
  const TomlTable& params = config.params;
  const std::string& model = config.model;

  // gamma_t sweeps fold the rate and the duration into one product.
  auto gamma_t = [&](double fallback) {
    if (auto it = overrides.find("gamma_t"); it != overrides.end()) return it->second;
    double g = param(params, "gamma", overrides, 1.0);
    double t = param(params, "t", overrides, fallback);
    return g * t;
  };

  std::vector<ModelBundle> bundles;
  if (model == "qnd") {
    require_known_params(params, {"levels", "eps"});
    require_known_overrides(overrides, {"eps"}, model);
    int levels = static_cast<int>(get_integer(params, "params.levels", 4));
    double eps = param(params, "eps", overrides, 0.1);
    bundles.push_back(qnd_symmetric_model(levels, eps));
  } else if (model == "two_level") {
    require_known_params(params, {"reprepare"});
    require_known_overrides(overrides, {}, model);
    std::string mode = "maxmixed";
    if (const TomlValue* p = find(params, "params.reprepare"))
      mode = p->as_string("params.reprepare");
    HilbertSpec qubit = HilbertSpec::finite(2);
    if (mode == "maxmixed") {
      bundles.push_back(two_level_model(max_mixed(qubit), max_mixed(qubit)));
    } else if (mode == "projective") {
      bundles.push_back(two_level_model(number_state(0, qubit), number_state(1, qubit)));
    } else {
      throw ConfigError("params.reprepare must be 'maxmixed' or 'projective'");
    }
  } else if (model == "photon_counting") {
    require_known_params(params, {"truncation", "gamma", "t"});
    require_known_overrides(overrides, {"gamma", "t", "gamma_t"}, model);
    int n = static_cast<int>(get_integer(params, "params.truncation", 12));
    bundles.push_back(photon_counting_model(1.0, gamma_t(0.5), HilbertSpec::fock(n)));
  } else if (model == "quantum_counter") {
    require_known_params(params, {"truncation", "gamma", "t", "x_max", "x_step", "observable"});
    require_known_overrides(overrides, {"gamma", "t", "gamma_t"}, model);
    int n = static_cast<int>(get_integer(params, "params.truncation", 12));
    double x_max = get_number(params, "params.x_max", 30.0);
    double x_step = get_number(params, "params.x_step", 0.1);
    std::string observable = "both";
    if (const TomlValue* p = find(params, "params.observable"))
      observable = p->as_string("params.observable");
    if (observable != "number" && observable != "poisson" && observable != "both")
      throw ConfigError("params.observable must be 'number', 'poisson', or 'both'");
    CounterModel counter = quantum_counter_model(1.0, gamma_t(0.5), HilbertSpec::fock(n),
                                                 OutcomeGrid::line(0.0, x_max, x_step));
    if (observable != "poisson") bundles.push_back(std::move(counter.number_obs));
    if (observable != "number") bundles.push_back(std::move(counter.poisson_obs));
  } else if (model == "homodyne") {
    require_known_params(params, {"truncation", "gamma", "t", "step_scale"});
    require_known_overrides(overrides, {"gamma", "t", "gamma_t", "step_scale"}, model);
    int n = static_cast<int>(get_integer(params, "params.truncation", 12));
    double scale = param(params, "step_scale", overrides, 1.0);
    if (scale <= 0) throw ConfigError("params.step_scale must be positive");
    HilbertSpec spec = HilbertSpec::fock(n);
    bundles.push_back(homodyne_model(1.0, gamma_t(1.0), spec,
                                     homodyne_default_x_grid(spec, scale),
                                     homodyne_default_y_grid(spec, scale)));
  } else if (model == "heterodyne") {
    require_known_params(params, {"truncation", "gamma", "t", "grid_reach", "grid_step"});
    require_known_overrides(overrides, {"gamma", "t", "gamma_t"}, model);
    int n = static_cast<int>(get_integer(params, "params.truncation", 12));
    double reach = get_number(params, "params.grid_reach", 5.0);
    double step = get_number(params, "params.grid_step", 0.25);
    if (reach <= 0 || step <= 0) throw ConfigError("grid_reach and grid_step must be positive");
    HilbertSpec spec = HilbertSpec::fock(n);
    OutcomeGrid plane = OutcomeGrid::plane(-reach, reach, step);
    bundles.push_back(heterodyne_model(1.0, gamma_t(1.0), spec, plane, plane));
  } else {
    throw ConfigError("unknown model '" + model + "'");
  }
  return bundles;
}

}  // namespace qmeas
