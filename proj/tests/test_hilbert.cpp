#include "qmeas/hilbert.hpp"

#include <cmath>

#include "doctest.h"

using namespace qmeas;

namespace {

// Probabilists' Hermite polynomial values He_k(t), used as an independent
// route to the exponential of a polynomial in the annihilation operator.
std::vector<double> hermite_he(int kmax, double t) {
  std::vector<double> he(kmax + 1);
  he[0] = 1.0;
  if (kmax >= 1) he[1] = t;
  for (int k = 1; k < kmax; ++k) he[k + 1] = t * he[k] - static_cast<double>(k) * he[k - 1];
  return he;
}

}  // namespace

TEST_CASE("annihilation matrix elements and truncated commutator") {
  auto spec = HilbertSpec::fock(12);
  Operator a = annihilation(spec);
  CHECK(a(0, 1).real() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(a(1, 2).real() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(a(2, 1) == Complex(0, 0));

  // [a, a^dag] = I - (N+1)|N><N| on the truncated space.
  Operator comm = a * a.adjoint() - a.adjoint() * a;
  Operator expected = Operator::Identity(13, 13);
  expected(12, 12) = -12.0;
  CHECK((comm - expected).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("number operator acts diagonally") {
  auto spec = HilbertSpec::fock(8);
  Operator n = number_operator(spec);
  Operator rho3 = number_state(3, spec);
  CHECK((n * rho3 - 3.0 * rho3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coherent state: mean occupation, ratios, leakage") {
  auto spec = HilbertSpec::fock(20);
  double leak = -1;
  Operator rho = coherent_state(Complex(1, 0), spec, &leak);
  CHECK(std::abs(rho.trace().real() - 1.0) < 1e-14);
  double mean_n = (number_operator(spec) * rho).trace().real();
  CHECK(std::abs(mean_n - 1.0) < 1e-9);
  CHECK(leak >= 0);
  CHECK(leak < 1e-12);

  Vector v = coherent_vector(Complex(1, 0), spec);
  CHECK(std::abs(v[1] / v[0] - Complex(1, 0)) < 1e-14);
  CHECK(std::abs(v.squaredNorm() - (1.0 - leak)) < 1e-15);
}

TEST_CASE("coherent state far outside the truncation is rejected") {
  auto spec = HilbertSpec::fock(4);
  CHECK_THROWS_AS(coherent_state(Complex(12, 0), spec), ParameterError);
}

TEST_CASE("thermal state diagonal") {
  auto spec = HilbertSpec::fock(20);
  Operator rho = thermal_state(0.5, spec);
  CHECK(std::abs(rho(0, 0).real() - 2.0 / 3.0) < 1e-9);
  CHECK(std::abs(rho(1, 1).real() / rho(0, 0).real() - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(rho.trace().real() - 1.0) < 1e-14);
}

TEST_CASE("quadrature overlap closed form matches the Hermite expansion") {
  CHECK(std::abs(quadrature_overlap(0.0, Complex(0, 0)) -
                 Complex(std::pow(M_PI, -0.25), 0)) < 1e-15);

  // sum_n <x|n><n|alpha> converges to the closed form once the truncation
  // covers the coherent amplitude.
  auto spec = HilbertSpec::fock(40);
  Complex alpha(0.8, -0.35);
  double x = 1.3;
  Eigen::VectorXd h = hermite_point(x, spec);
  Vector v = coherent_vector(alpha, spec);
  Complex series = 0;
  for (int n = 0; n < spec.dim(); ++n) series += h[n] * v[n];
  CHECK(std::abs(series - quadrature_overlap(x, alpha)) < 1e-12);
}

TEST_CASE("hermite functions resolve the identity on a wide grid") {
  auto spec = HilbertSpec::fock(10);
  double step = 0.01;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(spec.dim(), spec.dim());
  for (double x = -12.0; x <= 12.0 + step / 2; x += step) {
    Eigen::VectorXd h = hermite_point(x, spec);
    gram += step * h * h.transpose();
  }
  CHECK((gram - Eigen::MatrixXd::Identity(spec.dim(), spec.dim())).cwiseAbs().maxCoeff() <
        1e-10);
}

TEST_CASE("matrix exponential: nilpotent series against Hermite coefficients") {
  // exp(y a - (s/2) a^2) has elements c_{m-n} sqrt(m!/n!) with
  // c_k = s^{k/2} He_k(y/sqrt(s)) / k!.
  auto spec = HilbertSpec::fock(12);
  double y = 0.7, s = 0.45;
  Operator a = annihilation(spec);
  Operator arg = y * a - (s / 2.0) * (a * a);
  Operator e = matrix_exponential(arg);

  int d = spec.dim();
  auto he = hermite_he(d, y / std::sqrt(s));
  std::vector<double> log_fact(d + 1, 0.0);
  for (int k = 1; k <= d; ++k) log_fact[k] = log_fact[k - 1] + std::log(static_cast<double>(k));
  double worst = 0;
  for (int n = 0; n < d; ++n) {
    for (int m = n; m < d; ++m) {
      int k = m - n;
      double ck = std::pow(s, k / 2.0) * he[k] / std::exp(log_fact[k]);
      double target = ck * std::exp(0.5 * (log_fact[m] - log_fact[n]));
      worst = std::max(worst, std::abs(e(n, m).real() - target) / (1.0 + std::abs(target)));
      CHECK(std::abs(e(n, m).imag()) == 0.0);
    }
  }
  CHECK(worst < 1e-13);
  // Strictly triangular argument: everything below the diagonal stays zero.
  for (int n = 0; n < d; ++n)
    for (int m = 0; m < n; ++m) CHECK(e(n, m) == Complex(0, 0));
}

TEST_CASE("matrix exponential: diagonal, Hermitian, and general paths") {
  Operator diag = Operator::Zero(3, 3);
  diag(0, 0) = Complex(0.2, 0);
  diag(1, 1) = Complex(-1.5, 0);
  diag(2, 2) = Complex(0, 0.7);
  Operator ed = matrix_exponential(diag);
  CHECK(std::abs(ed(1, 1) - std::exp(Complex(-1.5, 0))) < 1e-15);
  CHECK(std::abs(ed(2, 2) - std::exp(Complex(0, 0.7))) < 1e-15);

  Rng rng(77);
  Operator h(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) h(i, j) = rng.cnormal();
  h = (h + h.adjoint()).eval() / 2.0;
  Operator eh = matrix_exponential(h);
  Operator ehm = matrix_exponential((-h).eval());
  CHECK((eh * ehm - Operator::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);

  Operator rot(2, 2);
  rot << Complex(0, 0), Complex(1, 0), Complex(-1, 0), Complex(0, 0);
  Operator er = matrix_exponential(rot);
  CHECK(std::abs(er(0, 0).real() - std::cos(1.0)) < 1e-12);
  CHECK(std::abs(er(0, 1).real() - std::sin(1.0)) < 1e-12);
}

TEST_CASE("random densities are deterministic, normalized, and positive") {
  auto spec = HilbertSpec::fock(6);
  Operator r1 = random_density(42, spec);
  Operator r2 = random_density(42, spec);
  Operator r3 = random_density(43, spec);
  CHECK((r1 - r2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r1 - r3).cwiseAbs().maxCoeff() > 1e-3);
  CHECK(std::abs(r1.trace().real() - 1.0) < 1e-14);
  CHECK(is_psd(r1));

  Operator d1 = random_diagonal_density(7, spec);
  CHECK(std::abs(d1.trace().real() - 1.0) < 1e-14);
  for (int i = 0; i < spec.dim(); ++i)
    for (int j = 0; j < spec.dim(); ++j)
      if (i != j) CHECK(d1(i, j) == Complex(0, 0));
}

TEST_CASE("state sanitizer clips only inside the tolerance") {
  auto spec = HilbertSpec::fock(3);
  Operator rho = max_mixed(spec);
  rho(0, 0) -= Complex(5e-13, 0);
  rho(1, 1) += Complex(5e-13, 0);
  Operator fixed = sanitize_state(rho);
  CHECK(std::abs(fixed.trace().real() - 1.0) < 1e-14);
  CHECK(is_psd(fixed));

  Operator bad = max_mixed(spec);
  bad(0, 0) = Complex(-0.3, 0);
  CHECK_THROWS_AS(sanitize_state(bad), PositivityError);
}
