#pragma once

#include <functional>
#include <vector>

#include "qmeas/common.hpp"

namespace qmeas {

enum class GridKind { discrete, line, plane };

// Outcome set with reference-measure weights. `weights[i]` is the measure mass
// the i-th node carries: 1 for discrete sets, trapezoid cell lengths for line
// grids, cell areas for plane grids. Grids built against a non-Lebesgue
// reference (e.g. a Gaussian outcome measure) fold its density into the
// weights via `reweighted`, so every density downstream is taken relative to
// `weights` and sums against them to a mass.
struct OutcomeGrid {
  GridKind kind = GridKind::discrete;
  std::vector<Label> labels;
  Eigen::VectorXd weights;

  std::size_t size() const { return labels.size(); }

  std::int64_t int_label(std::size_t i) const;
  double real_label(std::size_t i) const;
  Complex complex_label(std::size_t i) const;

  // Discrete set {0, ..., n-1}, unit weights.
  static OutcomeGrid discrete(std::int64_t n);
  // Uniform line grid on [lo, hi] with the given step (hi adjusted to the last
  // node <= hi + step/2). Trapezoid weights: step inside, step/2 at the ends.
  static OutcomeGrid line(double lo, double hi, double step);
  // Square plane grid: Cartesian product of two identical line grids, complex
  // labels re + i*im, product weights. Row-major: im varies fastest.
  static OutcomeGrid plane(double lo, double hi, double step);

  // Same nodes, weights multiplied by a density evaluated at each label.
  OutcomeGrid reweighted(const std::function<double(const Label&)>& density) const;
  // Line grid mapped through x -> factor * x; weights scale by |factor|
  // (plane grids by factor^2). Relative entropy is invariant under this
  // relabeling, which is what makes amplified evaluation grids legitimate.
  OutcomeGrid scaled(double factor) const;

  void validate() const;
};

bool same_labels(const OutcomeGrid& a, const OutcomeGrid& b, double tolerance = tol::match);

}  // namespace qmeas
