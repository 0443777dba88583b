#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmeas/classicality.hpp"
#include "qmeas/entropy.hpp"
#include "qmeas/hilbert.hpp"
#include "qmeas/measurement.hpp"

namespace qmeas {

// A measurement model ready for verification: the instrument, the reference
// observable X, the closed-form classical structure when the model has one,
// and the numeric policy the model declares for itself (grids set the floor
// on achievable residuals, so tolerances are model properties, not globals).
struct ModelBundle {
  std::string name;
  HilbertSpec space;
  KrausInstrument inst;
  PovmDensity povmX;
  std::optional<AnalyticClassicality> analytic;
  // Post-measurement X statistics are evaluated here when set; models whose
  // statistic relabels outcomes off the input grid substitute the image grid.
  std::optional<OutcomeGrid> post_grid;
  // Grid of post-measurement statistic values for the pushforward check when
  // it differs from post_grid (integer-window models keep conservation on the
  // relabeled window but push over the true extended label set).
  std::optional<OutcomeGrid> push_grid;
  // Evaluation grid for premeasurement X statistics when the post grid is not
  // a relabeled copy of the input grid (the x~ image of post_grid, so the
  // conservation identity compares one quadrature against itself).
  std::optional<OutcomeGrid> pre_grid;
  // Support interval of outcome y's post density on the evaluation grid; lets
  // the row loops skip nodes whose contribution sits below IEEE resolution.
  SupportFn row_support;
  // Finer X quadrature for the mutual-information joint (kernels that vary
  // below the observable grid's step), plus the matching y bands.
  std::optional<OutcomeGrid> mi_grid;
  SupportFn kernel_band;
  std::map<std::string, double> params;
  std::string notes;
  double leakage = 0;            // completeness defect on the guard band
  int guard = 0;                 // top basis states excluded from certificates
  double conservation_tol = 1e-9;
  double cert_tol = tol::cert_discrete;
  // Weight-vs-kernel comparison is pointwise (no quadrature enters), so its
  // threshold stays tight even where cert_tol carries a quadrature floor.
  double ban_tol = tol::cert_discrete;
  // Distribution masses must land within norm_tol of one; continuous grids
  // carry their quadrature error here (it cancels from residuals by
  // construction but not from raw masses).
  double norm_tol = 1e-8;
  // Certificates restrict integral checks to |y| <= cert_y_reach; kernels of
  // outcomes beyond it are not representable on the stored x grid.
  double cert_y_reach = std::numeric_limits<double>::infinity();
  bool expect_ban = true;
};

// Nondemolition measurement of a discrete observable: Kraus operators
// diag_x(e^{i theta(x;y,z)} sqrt(p(y,z|x))) for outcome y with internal
// record z. kernel[z](y, x) and phases[z](y, x) share shapes.
ModelBundle qnd_model(const std::vector<Eigen::MatrixXd>& kernel,
                      const std::vector<Eigen::MatrixXd>& phases, const HilbertSpec& spec);

// K-ary symmetric readout: p(y|x) = 1-eps on the diagonal, eps/(K-1) off it.
ModelBundle qnd_symmetric_model(int levels, double eps);

// Projective qubit readout that reprepares a fixed state phi_y per outcome.
ModelBundle two_level_model(const Operator& phi0, const Operator& phi1);

// Photon counting after decay gamma over time t: m quanta lost, binomial
// kernel p(m|n) = C(n,m) (1-e^{-gt})^m e^{-gt(n-m)}, statistic n~ = n - m read
// against the pre-loss label (n_in = n_out + m).
ModelBundle photon_counting_model(double gamma, double t, const HilbertSpec& spec);

// Quantum counter (amplification): m quanta gained, negative-binomial kernel
// p(m|n) = C(n+m,m) (e^{gt}-1)^m e^{-gt(n+m+1)}. Verified against two
// observables sharing one instrument: the number basis (statistic n~ = n - m,
// weight-preserving) and the Poisson kernel density p(x|n) = e^{-x} x^n / n!
// on x_grid (statistic x~ = e^{-gt} x, weight-scaling).
struct CounterModel {
  ModelBundle number_obs;
  ModelBundle poisson_obs;
};

CounterModel quantum_counter_model(double gamma, double t, const HilbertSpec& spec,
                                   const OutcomeGrid& x_grid);

// Number of counter outcomes needed before the kernel tail at input N drops
// below leak_tol.
std::int64_t counter_outcome_count(double gamma_t, int max_n, double leak_tol = tol::leak);

// Continuous homodyne record after time t: outcome density relative to the
// Wiener weight N(0, 1-e^{-gt}); X is the X1 quadrature. y_grid is the plain
// line grid; the model folds the Wiener weight into it.
ModelBundle homodyne_model(double gamma, double t, const HilbertSpec& spec,
                           const OutcomeGrid& x_grid, const OutcomeGrid& y_grid);

// Closed-form homodyne POVM density exp[gt/2 + X1^2 - e^{gt}(X1 - y/sqrt2)^2]
// evaluated by functional calculus at an enlarged internal truncation and
// compressed back (margin absorbs the spectral aliasing of the truncated X1).
Operator homodyne_povm_closed_form(double y, double gamma_t, const HilbertSpec& spec,
                                   int margin = 96);

// Default grids: x on [-L, L], L = sqrt(2N) + 4; y likewise before Wiener
// reweighting. Steps chosen so quadrature error, not truncation, sets the
// residual floor, and halving the step shrinks it measurably.
OutcomeGrid homodyne_default_x_grid(const HilbertSpec& spec, double step_scale = 1.0);
OutcomeGrid homodyne_default_y_grid(const HilbertSpec& spec, double step_scale = 1.0);

// Heterodyne record: complex outcome, reference weight exp(-|y|^2/s)/(pi s),
// s = 1 - e^{-gt}; X is the coherent-state POVM d^2a/pi (Q function).
ModelBundle heterodyne_model(double gamma, double t, const HilbertSpec& spec,
                             const OutcomeGrid& alpha_grid, const OutcomeGrid& y_grid);

// Coherent-state POVM on a plane grid (the Q-function observable).
PovmDensity coherent_povm(const OutcomeGrid& alpha_grid, const HilbertSpec& spec);

// D of the Q functions of two states on the grid: a lower bound on S(rho||sigma).
double q_relative_entropy(const Operator& rho, const Operator& sigma,
                          const OutcomeGrid& alpha_grid, const HilbertSpec& spec);

// Full certificate for a bundle: sufficient statistic, coarse graining,
// pushforward, Ban check, at the bundle's certification tolerance.
ClassicalityCertificate certify(const ModelBundle& bundle);

// Report options wired to the bundle's evaluation grids and mass policy.
ReportOptions bundle_options(const ModelBundle& bundle);

}  // namespace qmeas
