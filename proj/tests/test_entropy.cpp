#include "qmeas/entropy.hpp"

#include <cmath>

#include "doctest.h"
#include "qmeas/hilbert.hpp"

using namespace qmeas;

namespace {

Distribution discrete_dist(std::vector<double> p) {
  auto n = static_cast<std::int64_t>(p.size());
  Distribution d{OutcomeGrid::discrete(n), Eigen::Map<Eigen::VectorXd>(p.data(), n)};
  return d;
}

Distribution gaussian_on_grid(const OutcomeGrid& g, double mean, double var) {
  Eigen::VectorXd density(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double x = g.real_label(i);
    density[static_cast<Eigen::Index>(i)] =
        std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2 * M_PI * var);
  }
  return Distribution{g, density};
}

KrausInstrument decay_instrument(double p) {
  Operator m0 = Operator::Zero(2, 2);
  m0(0, 0) = 1.0;
  m0(1, 1) = std::sqrt(1.0 - p);
  Operator m1 = Operator::Zero(2, 2);
  m1(0, 1) = std::sqrt(p);
  return KrausInstrument::from_channels(OutcomeGrid::discrete(2),
                                        {KrausChannel{{m0}, 0}, KrausChannel{{m1}, 0}});
}

PovmDensity computational_pvm(int d) {
  std::vector<Operator> effects;
  for (int i = 0; i < d; ++i) {
    Operator e = Operator::Zero(d, d);
    e(i, i) = 1.0;
    effects.push_back(e);
  }
  return PovmDensity::from_effects(OutcomeGrid::discrete(d), std::move(effects));
}

}  // namespace

TEST_CASE("relative entropy: frozen value, zero, positivity, sentinel") {
  Distribution p = discrete_dist({0.3, 0.7});
  Distribution q = discrete_dist({0.5, 0.5});
  CHECK(relative_entropy(p, q) == doctest::Approx(0.08228287850505178).epsilon(1e-13));
  CHECK(relative_entropy(p, p) == 0.0);

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a[i] = rng.uniform() + 1e-3;
      b[i] = rng.uniform() + 1e-3;
    }
    a /= a.sum();
    b /= b.sum();
    Distribution pa{OutcomeGrid::discrete(5), a};
    Distribution pb{OutcomeGrid::discrete(5), b};
    CHECK(relative_entropy(pa, pb) >= 0.0);
  }

  Distribution r = discrete_dist({1.0, 0.0});
  Distribution s = discrete_dist({0.0, 1.0});
  CHECK(std::isinf(relative_entropy(r, s)));
}

TEST_CASE("relative entropy of Gaussians on a line grid hits the closed form") {
  OutcomeGrid g = OutcomeGrid::line(-10.0, 10.0, 0.01);
  Distribution p = gaussian_on_grid(g, 0.3, 1.0);
  Distribution q = gaussian_on_grid(g, -0.2, 1.0);
  // D(N(m1,v)||N(m2,v)) = (m1-m2)^2 / (2v)
  CHECK(std::abs(relative_entropy(p, q) - 0.125) < 1e-10);
}

TEST_CASE("shannon entropy: discrete and differential") {
  CHECK(shannon_entropy(discrete_dist({0.25, 0.25, 0.25, 0.25})) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  OutcomeGrid g = OutcomeGrid::line(-10.0, 10.0, 0.01);
  // H(N(0,1)) = ln sqrt(2 pi e)
  CHECK(std::abs(shannon_entropy(gaussian_on_grid(g, 0.0, 1.0)) -
                 0.5 * std::log(2 * M_PI * M_E)) < 1e-10);
}

TEST_CASE("mutual information: frozen, independent, correlated, invariant") {
  JointDistribution j{OutcomeGrid::discrete(2), OutcomeGrid::discrete(2),
                      Eigen::MatrixXd(2, 2)};
  j.density << 0.4, 0.1, 0.2, 0.3;
  CHECK(mutual_information(j) == doctest::Approx(0.08630462173553664).epsilon(1e-12));

  JointDistribution indep{OutcomeGrid::discrete(2), OutcomeGrid::discrete(3),
                          Eigen::MatrixXd(2, 3)};
  Eigen::VectorXd a(2), b(3);
  a << 0.3, 0.7;
  b << 0.2, 0.5, 0.3;
  indep.density = a * b.transpose();
  CHECK(std::abs(mutual_information(indep)) < 1e-15);

  JointDistribution corr{OutcomeGrid::discrete(2), OutcomeGrid::discrete(2),
                         Eigen::MatrixXd(2, 2)};
  corr.density << 0.5, 0.0, 0.0, 0.5;
  CHECK(mutual_information(corr) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // Bivariate normal with correlation c: I = -ln(1-c^2)/2, independent of the
  // reference measure the grid weights carry.
  double c = 0.6;
  OutcomeGrid g = OutcomeGrid::line(-8.0, 8.0, 0.02);
  auto n = static_cast<Eigen::Index>(g.size());
  JointDistribution gauss{g, g, Eigen::MatrixXd(n, n)};
  double det = 1 - c * c;
  for (Eigen::Index i = 0; i < n; ++i) {
    double x = g.real_label(static_cast<std::size_t>(i));
    for (Eigen::Index k = 0; k < n; ++k) {
      double y = g.real_label(static_cast<std::size_t>(k));
      gauss.density(i, k) =
          std::exp(-0.5 * (x * x - 2 * c * x * y + y * y) / det) / (2 * M_PI * std::sqrt(det));
    }
  }
  CHECK(std::abs(mutual_information(gauss) + 0.5 * std::log(det)) < 1e-8);
}

TEST_CASE("chain rule splits exactly") {
  Rng rng(21);
  JointDistribution p{OutcomeGrid::discrete(4), OutcomeGrid::discrete(3),
                      Eigen::MatrixXd(4, 3)};
  JointDistribution q = p;
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      p.density(i, j) = rng.uniform() + 0.01;
      q.density(i, j) = rng.uniform() + 0.01;
    }
  }
  p.density /= p.density.sum();
  q.density /= q.density.sum();
  ChainRule cr = chain_rule_decompose(p, q);
  CHECK(std::abs(cr.total - cr.y_term - cr.conditional_term) < 1e-14);
  CHECK(cr.y_term >= 0);
  CHECK(cr.conditional_term >= -1e-15);
}

TEST_CASE("conservation holds exactly for the decay instrument") {
  KrausInstrument inst = decay_instrument(0.36);
  PovmDensity pvm = computational_pvm(2);

  Operator rho = Operator::Zero(2, 2);
  rho(0, 0) = 0.7;
  rho(1, 1) = 0.3;
  Operator sigma = Operator::Zero(2, 2);
  sigma(0, 0) = 0.4;
  sigma(1, 1) = 0.6;

  ConservationReport rep = conservation_report(rho, sigma, inst, pvm);
  CHECK(rep.finite);
  CHECK(rep.d_pre == doctest::Approx(0.18378689738681217).epsilon(1e-12));
  CHECK(rep.lhs == doctest::Approx(0.04025904860833046).epsilon(1e-12));
  CHECK(std::abs(rep.residual) < 1e-13);
  CHECK(std::abs(rep.joint_residual) < 1e-13);
  CHECK(rep.per_outcome.size() == 2);

  // Conservation is a channel property here: random state pairs keep it.
  auto spec = HilbertSpec::finite(2);
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    Operator r = random_density(seed, spec);
    Operator s = random_density(seed + 1000, spec);
    ConservationReport rr = conservation_report(r, s, inst, pvm);
    CHECK(rr.finite);
    CHECK(std::abs(rr.residual) < 1e-12);
  }
}

TEST_CASE("conservation fails for a coherent rotation by the frozen amount") {
  // Single-outcome Hadamard instrument against the computational readout:
  // residual = -(ln 2 - ln(4/3)/2) = -ln(3)/2 for the pinned state pair.
  Operator h(2, 2);
  double r2 = 1.0 / std::sqrt(2.0);
  h << Complex(r2, 0), Complex(r2, 0), Complex(r2, 0), Complex(-r2, 0);
  KrausInstrument inst =
      KrausInstrument::from_channels(OutcomeGrid::discrete(1), {KrausChannel{{h}, 0}});

  Operator rho = Operator::Zero(2, 2);
  rho(0, 0) = 1.0;
  Operator sigma(2, 2);
  sigma << Complex(0.5, 0), Complex(0.25, 0), Complex(0.25, 0), Complex(0.5, 0);

  ConservationReport rep = conservation_report(rho, sigma, inst, computational_pvm(2));
  CHECK(rep.finite);
  CHECK(rep.residual == doctest::Approx(-0.5 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("infinity sentinel is recorded, not thrown") {
  Operator rho = Operator::Zero(2, 2);
  rho(0, 0) = 1.0;
  Operator sigma = Operator::Zero(2, 2);
  sigma(1, 1) = 1.0;
  ConservationReport rep =
      conservation_report(rho, sigma, decay_instrument(0.36), computational_pvm(2));
  CHECK_FALSE(rep.finite);
  CHECK(std::isinf(rep.d_pre));
}

TEST_CASE("shannon balance of the decay instrument: kernel route") {
  double p = 0.36;
  KrausInstrument inst = decay_instrument(p);
  PovmDensity pvm = computational_pvm(2);
  Operator rho = Operator::Zero(2, 2);
  rho(0, 0) = 0.7;
  rho(1, 1) = 0.3;

  KernelFn kernel = [p](const Label& y, const Label& x) {
    auto yi = std::get<std::int64_t>(y);
    auto xi = std::get<std::int64_t>(x);
    if (yi == 1) return xi == 1 ? p : 0.0;
    return xi == 1 ? 1.0 - p : 1.0;
  };

  ShannonBalance bal = shannon_balance(rho, inst, pvm, kernel);
  CHECK(bal.finite);
  // The decay statistic preserves outcome weight, so the balance closes.
  CHECK(std::abs(bal.deficit) < 1e-12);

  // Mutual information agrees with the explicit input-output joint.
  JointDistribution j{OutcomeGrid::discrete(2), OutcomeGrid::discrete(2),
                      Eigen::MatrixXd(2, 2)};
  j.density << 0.7 * 1.0, 0.7 * 0.0, 0.3 * (1 - p), 0.3 * p;
  CHECK(bal.mutual_info == doctest::Approx(mutual_information(j)).epsilon(1e-12));
  CHECK(bal.h_pre ==
        doctest::Approx(shannon_entropy(discrete_dist({0.7, 0.3}))).epsilon(1e-13));
}
