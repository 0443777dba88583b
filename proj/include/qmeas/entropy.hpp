#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "qmeas/common.hpp"
#include "qmeas/measurement.hpp"

namespace qmeas {

// Kernel density p(y|x) relative to the y-grid weights.
using KernelFn = std::function<double(const Label& y, const Label& x)>;

// Closed interval of grid coordinates outside which a density carries less
// mass than any aggregate resolves (relative tails below ~1e-30).
using SupportFn = std::function<std::pair<double, double>(const Label&)>;

// D(p||q) in nats against the shared grid weights. Zeros of p contribute
// nothing; a point with p above the density floor but q at or below it yields
// the +infinity sentinel (recorded, never thrown).
double relative_entropy(const Distribution& p, const Distribution& q);

// -sum w p ln p. Differential entropy on line/plane grids (weights carry the
// reference measure), ordinary Shannon entropy on discrete grids.
double shannon_entropy(const Distribution& p);

// I(X:Y) of a joint density. Invariant under the choice of reference weights.
double mutual_information(const JointDistribution& joint);

struct ChainRule {
  double total;             // D(joint_p || joint_q)
  double y_term;            // D of the y-marginals
  double conditional_term;  // E_p over y of D of the conditionals
};

// Chain-rule split of a joint relative entropy. total = y_term +
// conditional_term identically; callers assert the floating-point agreement.
ChainRule chain_rule_decompose(const JointDistribution& p, const JointDistribution& q);

struct PerOutcomeRow {
  Label y;
  double p_y;      // outcome density of rho at y (row mass over the eval grid;
                   // exact channel trace for null events, which skip the grid)
  double d_cond;   // D(p^X_{rho_y} || p^X_{sigma_y}) on the eval grid; NaN for
                   // null events (outcome mass <= prob_floor), which carry no
                   // weight in the averages
};

// Conservation statement evaluated on grids:
//   lhs       = D(p^Y_rho || p^Y_sigma)
//   d_pre     = D(p^X_rho || p^X_sigma)
//   d_post_avg= E_rho[ D(p^X_{rho_y} || p^X_{sigma_y}) ]
//   residual  = lhs - (d_pre - d_post_avg)
// joint_residual recomputes the residual through the two-outcome joint form
// D(p~^{XY}_rho || p~^{XY}_sigma) - d_pre; the two forms are algebraically
// identical, so their disagreement bounds the summation error and must stay
// within tol::residual_agree whenever everything is finite.
struct ConservationReport {
  double lhs = 0;
  double d_pre = 0;
  double d_post_avg = 0;
  double residual = 0;
  double joint_residual = 0;
  bool finite = true;
  std::vector<PerOutcomeRow> per_outcome;
};

struct ReportOptions {
  // Evaluation grid for post-measurement X statistics; defaults to the X grid.
  // Models whose sufficient statistic moves mass off the input grid (amplified
  // supports, shifted number windows) substitute the image grid here; relative
  // entropy is invariant under that relabeling.
  std::optional<OutcomeGrid> post_grid;
  // Evaluation grid for the premeasurement X statistics; defaults to the X
  // grid. When the post grid is not a relabeled copy of the input grid, the
  // x~ image of the post grid goes here so both sides of the conservation
  // identity share one quadrature and the grid error cancels from the
  // residual instead of being charged to it.
  std::optional<OutcomeGrid> pre_grid;
  // Support interval of outcome y's post density on the (line) evaluation
  // grid. Rows are evaluated only on the covered nodes; the excluded tails sit
  // below IEEE resolution, so the quadrature is unchanged to machine
  // precision while the node count drops by orders of magnitude.
  SupportFn row_support;
  // Finer X quadrature for the mutual-information joint, used when the kernel
  // varies on a scale below the observable grid's step (amplified kernels).
  std::optional<OutcomeGrid> mi_grid;
  // Support interval of the kernel p(.|x) over integer outcome labels; bounds
  // the y sums of the mutual-information passes.
  SupportFn kernel_band;
  double norm_tol = tol::norm_default;
  bool keep_rows = true;
};

ConservationReport conservation_report(const Operator& rho, const Operator& sigma,
                                       const KrausInstrument& inst, const PovmDensity& povm,
                                       const ReportOptions& opts = {});

// Information-gain bookkeeping for one state:
//   h_pre       = H(p^X_rho)
//   h_post_avg  = E_rho[ H(p^X_{rho_y}) ]
//   mutual_info = I(X:Y) of the input-output joint p^X_rho(x) p(y|x)
//   deficit     = (h_pre - h_post_avg) - mutual_info
// The kernel is the coarse-graining density of the model (analytic or
// extracted); the deficit vanishes exactly when the sufficient statistic
// preserves outcome weight (discrete relabelings), and picks up the log
// Jacobian of x~ otherwise.
struct ShannonBalance {
  double h_pre = 0;
  double h_post_avg = 0;
  double mutual_info = 0;
  double deficit = 0;
  bool finite = true;
};

ShannonBalance shannon_balance(const Operator& rho, const KrausInstrument& inst,
                               const PovmDensity& povm, const KernelFn& p_y_given_x,
                               const ReportOptions& opts = {});

}  // namespace qmeas
