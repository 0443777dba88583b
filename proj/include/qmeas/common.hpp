#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace qmeas {

using Complex = std::complex<double>;
using Operator = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Outcome label: an index into a discrete set, a point on a line, or a point
// in the complex plane.
using Label = std::variant<std::int64_t, double, Complex>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values: dimensions, ranges, unsupported space kinds.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// An operator that must be positive has an eigenvalue below the clip threshold.
class PositivityError : public Error {
 public:
  using Error::Error;
};

// Grid/operator shape mismatches between objects that must share a space.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

// Conditioning on an outcome whose probability is below the floor.
class NullEventError : public Error {
 public:
  using Error::Error;
};

// A sufficient-statistic candidate is not unique at the matching tolerance.
class AmbiguityError : public Error {
 public:
  using Error::Error;
};

// An iterative or algebraic step failed to reach its tolerance.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Configuration parsing or validation failure (CLI maps this to exit 64).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Central numeric policy. Values are part of the library contract.
namespace tol {
// Trace/eigenvalue clip: negatives above -clip are rounded to zero, below throw.
inline constexpr double clip = 1e-12;
// Outcomes with probability <= prob_floor are null events for conditioning.
inline constexpr double prob_floor = 1e-12;
// Density values <= density_floor count as exact zeros inside entropies.
inline constexpr double density_floor = 1e-300;
// Certification tolerance for discrete models (continuous models declare their own).
inline constexpr double cert_discrete = 1e-8;
// Sufficient-statistic weights <= q_floor mark the null event (no surviving branch).
inline constexpr double q_floor = 1e-12;
// Label/proportionality matching tolerance for statistic extraction.
inline constexpr double match = 1e-6;
// Truncation-leakage warning threshold.
inline constexpr double leak = 1e-8;
// The two conservation-residual forms must agree to this.
inline constexpr double residual_agree = 1e-9;
// Chain-rule decomposition identity tolerance.
inline constexpr double chain_rule = 1e-10;
// Default distribution-normalization tolerance (models may widen per grid).
inline constexpr double norm_default = 1e-6;
}  // namespace tol

// Compensated (Neumaier) accumulator. Reductions that feed residual checks at
// 1e-9 may run over 1e8 terms; plain summation would not survive that.
struct Accum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

// Deterministic, platform-independent RNG: splitmix64 driving Box-Muller.
// Seeds are part of every random object's identity, so outputs must be
// bit-stable across runs and toolchains.
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    do {
      u = uniform();
    } while (u <= 0.0);
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * M_PI * v);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * v);
  }
  Complex cnormal() { return Complex(normal(), normal()); }

 private:
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Label helpers. Encoded form: discrete index -> (n, 0), line point -> (x, 0),
// plane point -> (re, im); the null event encodes as NaN.
Complex encode_label(const Label& l);
std::string label_to_string(const Label& l);
bool labels_close(const Label& a, const Label& b, double tolerance = tol::match);

}  // namespace qmeas
