#include "qmeas/hilbert.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace qmeas {

HilbertSpec HilbertSpec::finite(int dim, std::string label) {
  if (dim < 1) throw ParameterError("finite space needs dim >= 1");
  return HilbertSpec{Kind::finite, dim - 1, std::move(label)};
}

HilbertSpec HilbertSpec::fock(int max_n, std::string label) {
  if (max_n < 1) throw ParameterError("fock truncation needs max_n >= 1");
  return HilbertSpec{Kind::fock, max_n, std::move(label)};
}

Operator annihilation(const HilbertSpec& spec) {
  if (spec.kind != HilbertSpec::Kind::fock) {
    throw ParameterError("annihilation operator needs a fock space");
  }
  int d = spec.dim();
  Operator a = Operator::Zero(d, d);
  for (int n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

Operator number_operator(const HilbertSpec& spec) {
  int d = spec.dim();
  Operator n = Operator::Zero(d, d);
  for (int k = 0; k < d; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

Vector coherent_vector(Complex alpha, const HilbertSpec& spec) {
  if (spec.kind != HilbertSpec::Kind::fock) {
    throw ParameterError("coherent expansion needs a fock space");
  }
  int d = spec.dim();
  Vector v(d);
  v[0] = std::exp(-0.5 * std::norm(alpha));
  for (int n = 1; n < d; ++n) v[n] = v[n - 1] * alpha / std::sqrt(static_cast<double>(n));
  return v;
}

Operator coherent_state(Complex alpha, const HilbertSpec& spec, double* leakage_out) {
  Vector v = coherent_vector(alpha, spec);
  double kept = v.squaredNorm();
  if (leakage_out) *leakage_out = 1.0 - kept;
  if (kept <= tol::prob_floor) {
    throw ParameterError("coherent state lies outside the truncated space");
  }
  return (v * v.adjoint()) / kept;
}

Operator number_state(int n, const HilbertSpec& spec) {
  if (n < 0 || n >= spec.dim()) throw ParameterError("number state outside the space");
  Operator rho = Operator::Zero(spec.dim(), spec.dim());
  rho(n, n) = 1.0;
  return rho;
}

Operator thermal_state(double nbar, const HilbertSpec& spec, double* leakage_out) {
  if (!(nbar >= 0) || !std::isfinite(nbar)) throw ParameterError("thermal nbar must be >= 0");
  int d = spec.dim();
  double q = nbar / (1.0 + nbar);
  Eigen::VectorXd w(d);
  for (int n = 0; n < d; ++n) w[n] = std::pow(q, n);
  if (leakage_out) *leakage_out = (nbar == 0) ? 0.0 : std::pow(q, d);
  Operator rho = Operator::Zero(d, d);
  double norm = w.sum();
  for (int n = 0; n < d; ++n) rho(n, n) = w[n] / norm;
  return rho;
}

Operator max_mixed(const HilbertSpec& spec) {
  int d = spec.dim();
  return Operator::Identity(d, d) / static_cast<double>(d);
}

Operator random_density(std::uint64_t seed, const HilbertSpec& spec) {
  int d = spec.dim();
  Rng rng(seed);
  Operator g(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) g(i, j) = rng.cnormal();
  }
  Operator rho = g * g.adjoint();
  return rho / rho.trace().real();
}

Operator random_diagonal_density(std::uint64_t seed, const HilbertSpec& spec) {
  int d = spec.dim();
  Rng rng(seed);
  Eigen::VectorXd w(d);
  for (int i = 0; i < d; ++i) w[i] = std::norm(rng.cnormal());
  w /= w.sum();
  Operator rho = Operator::Zero(d, d);
  for (int i = 0; i < d; ++i) rho(i, i) = w[i];
  return rho;
}

Eigen::VectorXd hermite_point(double x, const HilbertSpec& spec) {
  int d = spec.dim();
  Eigen::VectorXd h(d);
  h[0] = std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x);
  if (d > 1) h[1] = std::sqrt(2.0) * x * h[0];
  for (int n = 1; n + 1 < d; ++n) {
    double np1 = static_cast<double>(n + 1);
    h[n + 1] = std::sqrt(2.0 / np1) * x * h[n] - std::sqrt(n / np1) * h[n - 1];
  }
  return h;
}

Complex quadrature_overlap(double x, Complex alpha) {
  Complex expo = -0.5 * x * x + std::sqrt(2.0) * x * alpha - 0.5 * alpha * alpha -
                 0.5 * std::norm(alpha);
  return std::pow(M_PI, -0.25) * std::exp(expo);
}

namespace {

bool exactly_diagonal(const Operator& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (i != j && a(i, j) != Complex(0, 0)) return false;
    }
  }
  return true;
}

// Strictly triangular in either orientation, diagonal included in the check.
bool exactly_nilpotent_triangular(const Operator& a) {
  bool upper = true;
  bool lower = true;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) == Complex(0, 0)) continue;
      if (i >= j) upper = false;
      if (i <= j) lower = false;
    }
  }
  return upper || lower;
}

}  // namespace

Operator matrix_exponential(const Operator& a) {
  if (a.rows() != a.cols()) throw ParameterError("matrix exponential needs a square matrix");
  if (!a.allFinite()) throw ParameterError("matrix exponential needs finite entries");
  Eigen::Index d = a.rows();
  if (exactly_diagonal(a)) {
    Operator e = Operator::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) e(i, i) = std::exp(a(i, i));
    return e;
  }
  if (exactly_nilpotent_triangular(a)) {
    Operator e = Operator::Identity(d, d);
    Operator term = Operator::Identity(d, d);
    for (Eigen::Index k = 1; k < d; ++k) {
      term = (term * a) / static_cast<double>(k);
      if (term.cwiseAbs().maxCoeff() == 0.0) break;
      e += term;
    }
    return e;
  }
  double scale = a.cwiseAbs().maxCoeff();
  if ((a - a.adjoint()).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + scale)) {
    Eigen::SelfAdjointEigenSolver<Operator> es((a + a.adjoint()) / 2.0);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    Operator e = es.eigenvectors() * ev.array().exp().matrix().asDiagonal() *
                 es.eigenvectors().adjoint();
    return e;
  }
  return a.exp();
}

bool is_hermitian(const Operator& a, double tolerance) {
  if (a.rows() != a.cols()) return false;
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tolerance * (1.0 + a.cwiseAbs().maxCoeff());
}

bool is_psd(const Operator& a, double tolerance) {
  if (!is_hermitian(a, tolerance)) return false;
  Eigen::SelfAdjointEigenSolver<Operator> es((a + a.adjoint()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return es.eigenvalues().minCoeff() >= -tolerance * (1.0 + a.cwiseAbs().maxCoeff());
}

Operator sanitize_state(const Operator& a) {
  if (a.rows() != a.cols()) throw ParameterError("state must be square");
  if (!is_hermitian(a, 1e-10)) throw PositivityError("state is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Operator> es((a + a.adjoint()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol::clip * scale) {
      throw PositivityError("state has a negative eigenvalue beyond the clip threshold");
    }
    if (ev[i] < 0) ev[i] = 0;
  }
  double tr = ev.sum();
  if (tr <= 0) throw PositivityError("state has zero trace");
  Operator rho = es.eigenvectors() * (ev / tr).asDiagonal() * es.eigenvectors().adjoint();
  return (rho + rho.adjoint()) / 2.0;
}

}  // namespace qmeas
