#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "qmeas/common.hpp"
#include "qmeas/grid.hpp"

namespace qmeas {

// POVM density relative to the grid's reference weights: sum_i weights[i] *
// effects[i] resolves the identity up to truncation leakage. Effect matrices
// are shared so copies are cheap and instances are immutable after build.
//
// Optional analytic evaluators extend the POVM off the stored grid:
//  - diag_at(label, dim, offset): for POVMs diagonal in the number basis, the
//    effect-density diagonal at an arbitrary label, expressed in window
//    coordinates (window index k represents the true basis state |k+offset>).
//  - vec_at(label): rank-1 factor v with effect density = vec_scale * v v^dag
//    (offset-0 spaces only).
struct PovmDensity {
  OutcomeGrid grid;
  std::shared_ptr<const std::vector<Operator>> effects;
  bool diagonal = false;
  std::function<Eigen::VectorXd(const Label&, int dim, std::int64_t offset)> diag_at;
  std::function<Vector(const Label&)> vec_at;
  double vec_scale = 1.0;

  const Operator& effect(std::size_t i) const { return (*effects)[i]; }
  std::size_t size() const { return grid.size(); }

  static PovmDensity from_effects(OutcomeGrid grid, std::vector<Operator> effects);
};

// One channel of a CP instrument, as a density relative to the outcome grid's
// weights: sum over channels of sum_k M rho M^dag integrates (against the
// weights) to the unconditional output state. `window_offset` says the stored
// matrices act in window coordinates: matrix row k represents the true basis
// state |k + window_offset>. Offsets let channels whose range escapes the
// input truncation (e.g. creation-operator Kraus terms) stay exact and small.
struct KrausChannel {
  std::vector<Operator> ops;
  std::int64_t window_offset = 0;
  // Set during instrument assembly; diagonal channels take O(d^2) to apply.
  bool diagonal = false;
};

struct KrausInstrument {
  OutcomeGrid grid;
  std::shared_ptr<const std::vector<KrausChannel>> channels;

  const KrausChannel& channel(std::size_t i) const { return (*channels)[i]; }
  std::size_t size() const { return grid.size(); }

  static KrausInstrument from_channels(OutcomeGrid grid, std::vector<KrausChannel> channels);
};

// Probability density over an outcome grid, relative to the grid weights.
struct Distribution {
  OutcomeGrid grid;
  Eigen::VectorXd density;

  double mass() const { return grid.weights.dot(density); }
};

// Joint density over (x, y), relative to the product of the grid weights.
// density(i, j) pairs x_grid node i with y_grid node j.
struct JointDistribution {
  OutcomeGrid x_grid;
  OutcomeGrid y_grid;
  Eigen::MatrixXd density;
};

// tr[rho E_x] for every node. Throws PositivityError on values below -clip;
// clips tiny negatives. Total mass must be within norm_tol of one.
Distribution povm_distribution(const Operator& rho, const PovmDensity& povm,
                               double norm_tol = tol::norm_default);

// tr of each channel output: the outcome density of the instrument.
Distribution instrument_distribution(const Operator& rho, const KrausInstrument& inst,
                                     double norm_tol = tol::norm_default);

// Unnormalized channel output sum_k M_k rho M_k^dag in window coordinates.
Operator apply_channel(const Operator& rho, const KrausChannel& ch);

// tr of the channel output, without materializing it.
double channel_output_trace(const Operator& rho, const KrausChannel& ch);

// Normalized post-measurement state for outcome index y, in the channel's
// window coordinates. Throws NullEventError when the outcome density is at or
// below prob_floor. `density_out`, when given, receives the outcome density.
Operator post_state(const Operator& rho, const KrausInstrument& inst, std::size_t y,
                    double* density_out = nullptr);

// Heisenberg-picture adjoint sum_k M_k^dag E M_k for one outcome. `effect`
// must be expressed in the channel's window coordinates.
Operator heisenberg_adjoint(const KrausInstrument& inst, std::size_t y, const Operator& effect);

// Evaluates tr[B E_x] over a fixed grid for many operators B, caching
// whatever the POVM representation allows (stored diagonals, rank-1 factor
// matrix, dense effects). B is given in window coordinates with an offset:
// integer-labeled grids shift their labels by the offset (a relabeling that
// relative entropy does not see); real/plane grids pass the offset to the
// POVM's windowed diagonal evaluator; dense and rank-1 paths require offset 0.
class EffectEvaluator {
 public:
  EffectEvaluator(const PovmDensity& povm, const OutcomeGrid& eval_grid);
  Eigen::VectorXd row(const Operator& b, std::int64_t offset) const;
  // Same evaluation restricted to grid nodes [i0, i0 + len).
  Eigen::VectorXd row_segment(const Operator& b, std::int64_t offset, Eigen::Index i0,
                              Eigen::Index len) const;
  const OutcomeGrid& grid() const { return grid_; }

 private:
  enum class Mode { dense, stored_diag, windowed_diag, rank1 };
  Mode mode_;
  const PovmDensity* povm_;
  OutcomeGrid grid_;
  Eigen::MatrixXd diags_;    // stored_diag: node x dim
  Eigen::MatrixXcd factors_; // rank1: dim x node
};

// p~(x, y) = tr[channel_y(rho) E_x] over the stored grids.
JointDistribution joint_successive_distribution(const Operator& rho, const KrausInstrument& inst,
                                                const PovmDensity& povm);

// Spectral norm of the guard-band block of (sum_i w_i E_i - I). The guard band
// drops the top `guard` basis states (spaces too small to spare them keep one
// state). Overload for instruments uses the induced POVM sum_k M^dag M.
double completeness_residual(const PovmDensity& povm, int guard = 4);
double completeness_residual(const KrausInstrument& inst, int guard = 4);

}  // namespace qmeas
