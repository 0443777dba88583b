#include "qmeas/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qmeas {

Complex encode_label(const Label& l) {
  if (std::holds_alternative<std::int64_t>(l)) {
    return Complex(static_cast<double>(std::get<std::int64_t>(l)), 0.0);
  }
  if (std::holds_alternative<double>(l)) {
    return Complex(std::get<double>(l), 0.0);
  }
  return std::get<Complex>(l);
}

std::string label_to_string(const Label& l) {
  std::ostringstream os;
  os.precision(12);
  if (std::holds_alternative<std::int64_t>(l)) {
    os << std::get<std::int64_t>(l);
  } else if (std::holds_alternative<double>(l)) {
    os << std::get<double>(l);
  } else {
    Complex c = std::get<Complex>(l);
    os << c.real() << (c.imag() < 0 ? "-" : "+") << std::abs(c.imag()) << "i";
  }
  return os.str();
}

bool labels_close(const Label& a, const Label& b, double tolerance) {
  return std::abs(encode_label(a) - encode_label(b)) <= tolerance;
}

std::int64_t OutcomeGrid::int_label(std::size_t i) const {
  if (!std::holds_alternative<std::int64_t>(labels[i])) {
    throw IncompatibleError("grid label is not discrete");
  }
  return std::get<std::int64_t>(labels[i]);
}

double OutcomeGrid::real_label(std::size_t i) const {
  if (std::holds_alternative<double>(labels[i])) return std::get<double>(labels[i]);
  if (std::holds_alternative<std::int64_t>(labels[i])) {
    return static_cast<double>(std::get<std::int64_t>(labels[i]));
  }
  throw IncompatibleError("grid label is not real");
}

Complex OutcomeGrid::complex_label(std::size_t i) const { return encode_label(labels[i]); }

OutcomeGrid OutcomeGrid::discrete(std::int64_t n) {
  if (n <= 0) throw ParameterError("discrete grid needs at least one outcome");
  OutcomeGrid g;
  g.kind = GridKind::discrete;
  g.labels.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) g.labels.emplace_back(i);
  g.weights = Eigen::VectorXd::Ones(n);
  return g;
}

OutcomeGrid OutcomeGrid::line(double lo, double hi, double step) {
  if (!(step > 0) || !std::isfinite(lo) || !std::isfinite(hi) || hi <= lo) {
    throw ParameterError("line grid needs finite lo < hi and step > 0");
  }
  auto n = static_cast<std::int64_t>(std::floor((hi - lo) / step + 0.5)) + 1;
  if (n < 2) throw ParameterError("line grid needs at least two nodes");
  OutcomeGrid g;
  g.kind = GridKind::line;
  g.labels.reserve(static_cast<std::size_t>(n));
  g.weights = Eigen::VectorXd::Constant(n, step);
  for (std::int64_t i = 0; i < n; ++i) g.labels.emplace_back(lo + static_cast<double>(i) * step);
  g.weights[0] = step / 2;
  g.weights[n - 1] = step / 2;
  return g;
}

OutcomeGrid OutcomeGrid::plane(double lo, double hi, double step) {
  OutcomeGrid axis = line(lo, hi, step);
  auto n = static_cast<std::int64_t>(axis.size());
  OutcomeGrid g;
  g.kind = GridKind::plane;
  g.labels.reserve(static_cast<std::size_t>(n * n));
  g.weights.resize(n * n);
  for (std::int64_t i = 0; i < n; ++i) {
    double re = axis.real_label(static_cast<std::size_t>(i));
    for (std::int64_t j = 0; j < n; ++j) {
      g.labels.emplace_back(Complex(re, axis.real_label(static_cast<std::size_t>(j))));
      g.weights[i * n + j] = axis.weights[i] * axis.weights[j];
    }
  }
  return g;
}

OutcomeGrid OutcomeGrid::reweighted(const std::function<double(const Label&)>& density) const {
  OutcomeGrid g = *this;
  for (std::size_t i = 0; i < size(); ++i) {
    double d = density(labels[i]);
    if (!(d >= 0) || !std::isfinite(d)) {
      throw ParameterError("reference density must be finite and nonnegative");
    }
    g.weights[static_cast<Eigen::Index>(i)] *= d;
  }
  return g;
}

OutcomeGrid OutcomeGrid::scaled(double factor) const {
  if (!(factor > 0) || !std::isfinite(factor)) {
    throw ParameterError("grid scale factor must be positive and finite");
  }
  OutcomeGrid g = *this;
  double wf = (kind == GridKind::plane) ? factor * factor : factor;
  if (kind == GridKind::discrete) {
    throw ParameterError("discrete grids cannot be scaled");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (kind == GridKind::line) {
      g.labels[i] = real_label(i) * factor;
    } else {
      g.labels[i] = complex_label(i) * factor;
    }
  }
  g.weights *= wf;
  return g;
}

void OutcomeGrid::validate() const {
  if (labels.empty()) throw ParameterError("grid has no outcomes");
  if (static_cast<std::size_t>(weights.size()) != labels.size()) {
    throw IncompatibleError("grid weights/labels size mismatch");
  }
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0) || !std::isfinite(weights[i])) {
      throw ParameterError("grid weights must be finite and nonnegative");
    }
  }
}

bool same_labels(const OutcomeGrid& a, const OutcomeGrid& b, double tolerance) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!labels_close(a.labels[i], b.labels[i], tolerance)) return false;
  }
  return true;
}

}  // namespace qmeas
