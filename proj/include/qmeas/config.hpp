#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmeas/models.hpp"
#include "qmeas/toml_lite.hpp"

namespace qmeas {

// State constructor grammar (every random state carries its seed):
//   "number:2"                    basis state
//   "coherent:0.8" | "coherent:0.8,-0.3"
//   "thermal:0.5"                 mean occupation
//   "maxmixed"
//   "random:42"                   Hilbert-Schmidt ensemble
//   "randdiag:42"                 diagonal restriction of the ensemble
//   "mixed:0.3;coherent:1;number:0"  convex mix of two atomic specs
Operator make_state(const std::string& spec_string, const HilbertSpec& space);

struct StatePair {
  std::string rho;
  std::string sigma;
};

// Parsed run configuration. `params` stays raw; each model builder validates
// its own keys and rejects unknown ones.
struct RunConfig {
  std::string model;
  TomlTable params;
  std::vector<StatePair> pairs;
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::string output_path;
  std::string output_format = "json";
  std::map<std::string, double> tolerances;
  std::map<std::string, bool> expect_bool;
  std::map<std::string, double> expect_num;
};

RunConfig load_run_config(const std::string& path);

// Instantiates the configured model; sweep overrides substitute the swept
// parameter. The counter model contributes one bundle per observable.
std::vector<ModelBundle> build_model(const RunConfig& config,
                                     const std::map<std::string, double>& overrides = {});

}  // namespace qmeas
