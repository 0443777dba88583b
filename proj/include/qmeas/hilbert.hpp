#pragma once

#include <cstdint>
#include <string>

#include "qmeas/common.hpp"

namespace qmeas {

// Finite-dimensional state space. `fock` means the span of |0..N> inside the
// oscillator space; operators built on it are the exact compressions P A P of
// their infinite-dimensional counterparts. `finite` means a genuinely
// K-level system (truncation = K-1) with no continuum behind it.
struct HilbertSpec {
  enum class Kind { finite, fock };
  Kind kind = Kind::fock;
  int truncation = 0;
  std::string label;

  int dim() const { return truncation + 1; }

  static HilbertSpec finite(int dim, std::string label = {});
  static HilbertSpec fock(int max_n, std::string label = {});
};

// Annihilation operator compression: <n-1|a|n> = sqrt(n). Satisfies
// [a, a^dag] = I - (N+1)|N><N| exactly on the truncated space.
Operator annihilation(const HilbertSpec& spec);
Operator number_operator(const HilbertSpec& spec);

// Unnormalized truncated coherent expansion v_n = e^{-|a|^2/2} a^n / sqrt(n!).
// This is P|alpha> exactly; its squared norm is the retained Poisson mass.
Vector coherent_vector(Complex alpha, const HilbertSpec& spec);

// Projected and renormalized coherent density matrix. `leakage_out`, when
// given, receives the pre-normalization trace defect 1 - <retained mass>.
Operator coherent_state(Complex alpha, const HilbertSpec& spec, double* leakage_out = nullptr);

Operator number_state(int n, const HilbertSpec& spec);
Operator thermal_state(double nbar, const HilbertSpec& spec, double* leakage_out = nullptr);
Operator max_mixed(const HilbertSpec& spec);

// Hilbert-Schmidt ensemble: G G^dag / tr with G iid standard complex Gaussian.
Operator random_density(std::uint64_t seed, const HilbertSpec& spec);
// Same ensemble restricted to the diagonal (a random probability vector from
// squared moduli of Gaussians).
Operator random_diagonal_density(std::uint64_t seed, const HilbertSpec& spec);

// Position-representation overlaps for the X1 = (a + a^dag)/sqrt(2) quadrature.
// hermite_point returns <n|x> for n = 0..N via the stable Hermite-function
// recursion; quadrature_overlap returns the closed-form <x|alpha> of the full
// (untruncated) coherent state.
Eigen::VectorXd hermite_point(double x, const HilbertSpec& spec);
Complex quadrature_overlap(double x, Complex alpha);

// Matrix exponential with exact special paths: diagonal matrices element-wise,
// strictly triangular (nilpotent) matrices by the terminating power series,
// Hermitian matrices by eigendecomposition; anything else falls back to
// scaling-and-squaring.
Operator matrix_exponential(const Operator& a);

bool is_hermitian(const Operator& a, double tolerance = tol::clip);
bool is_psd(const Operator& a, double tolerance = tol::clip);

// Validates Hermiticity, clips eigenvalues in (-clip, 0) to zero, renormalizes
// the trace to one. Eigenvalues below -clip throw PositivityError.
Operator sanitize_state(const Operator& a);

}  // namespace qmeas
