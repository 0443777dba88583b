#include "qmeas/models.hpp"

#include <cmath>

#include "doctest.h"
#include "qmeas/entropy.hpp"
#include "qmeas/hilbert.hpp"

using namespace qmeas;

namespace {

Operator diag2(double p0) {
  Operator r = Operator::Zero(2, 2);
  r(0, 0) = p0;
  r(1, 1) = 1.0 - p0;
  return r;
}

ConservationReport run_conservation(const ModelBundle& b, const Operator& rho,
                                    const Operator& sigma) {
  return conservation_report(rho, sigma, b.inst, b.povmX, bundle_options(b));
}

ShannonBalance run_balance(const ModelBundle& b, const Operator& rho) {
  return shannon_balance(rho, b.inst, b.povmX, b.analytic->p_y_given_x, bundle_options(b));
}

// D between Poisson distributions of the given means.
double poisson_kl(double l1, double l2) { return l1 * std::log(l1 / l2) + l2 - l1; }

}  // namespace

TEST_CASE("symmetric nondemolition readout conserves everything") {
  auto b = qnd_symmetric_model(4, 0.1);
  CHECK(b.expect_ban);
  CHECK(b.leakage < 1e-14);

  Operator rho = random_density(11, HilbertSpec::finite(4));
  Operator sigma = random_density(12, HilbertSpec::finite(4));
  auto rep = run_conservation(b, rho, sigma);
  CHECK(rep.finite);
  CHECK(std::abs(rep.residual) < 1e-12);
  CHECK(rep.d_pre > 0);
  CHECK(rep.d_post_avg > 0);

  auto cert = certify(b);
  CHECK(cert.residual_sufficient < 1e-12);
  CHECK(cert.residual_coarse < 1e-12);
  CHECK(cert.residual_pushforward < 1e-12);
  CHECK(cert.ban_satisfied);
  CHECK(cert.ban_deviation < 1e-12);

  auto bal = run_balance(b, rho);
  CHECK(std::abs(bal.deficit) < 1e-10);
}

TEST_CASE("nondemolition readout with split records and phases") {
  // Two internal records z share each outcome, with nontrivial phases: the
  // dephasing differs but all classical statistics stay identical.
  int lv = 3;
  Eigen::MatrixXd k0(lv, lv), k1(lv, lv), ph0(lv, lv), ph1(lv, lv);
  k0.setConstant(0.05);
  k0.diagonal().setConstant(0.5);
  k1 = k0;
  k1.diagonal().setConstant(0.3);
  for (Eigen::Index y = 0; y < lv; ++y) {
    for (Eigen::Index x = 0; x < lv; ++x) {
      ph0(y, x) = 0.3 * static_cast<double>(y) - 0.7 * static_cast<double>(x);
      ph1(y, x) = 1.1 * static_cast<double>(x * y);
    }
  }
  auto b = qnd_model({k0, k1}, {ph0, ph1}, HilbertSpec::finite(lv));
  CHECK(b.leakage < 1e-14);

  Operator rho = random_density(21, HilbertSpec::finite(lv));
  Operator sigma = random_density(22, HilbertSpec::finite(lv));
  auto rep = run_conservation(b, rho, sigma);
  CHECK(std::abs(rep.residual) < 1e-12);
  auto cert = certify(b);
  CHECK(cert.ban_satisfied);

  Eigen::MatrixXd bad = k0;
  bad(0, 0) += 0.2;
  CHECK_THROWS_AS(qnd_model({bad, k1}, {ph0, ph1}, HilbertSpec::finite(lv)), ParameterError);
}

TEST_CASE("qubit readout with maximally mixed repreparation loses one bit") {
  auto b = two_level_model(0.5 * Operator::Identity(2, 2), 0.5 * Operator::Identity(2, 2));
  CHECK_FALSE(b.expect_ban);

  Operator rho = diag2(0.3);
  Operator sigma = diag2(0.6);
  auto rep = run_conservation(b, rho, sigma);
  CHECK(std::abs(rep.residual) < 1e-12);
  // Repreparation erases all post-measurement distinguishability.
  CHECK(rep.d_post_avg == doctest::Approx(0.0).epsilon(1e-12));

  auto cert = certify(b);
  CHECK(cert.residual_sufficient < 1e-12);
  CHECK(cert.residual_coarse < 1e-12);
  CHECK(cert.residual_pushforward < 1e-12);
  CHECK_FALSE(cert.ban_satisfied);
  CHECK(cert.ban_deviation == doctest::Approx(0.5).epsilon(1e-10));

  auto bal = run_balance(b, rho);
  CHECK(bal.deficit == doctest::Approx(-std::log(2.0)).epsilon(1e-10));

  auto proj = two_level_model(diag2(1.0), diag2(0.0));
  CHECK(proj.expect_ban);
  auto bal2 = run_balance(proj, rho);
  CHECK(std::abs(bal2.deficit) < 1e-10);
}

TEST_CASE("photon counting: binomial kernel and recoverable pre-loss label") {
  double gt = std::log(2.0);
  HilbertSpec spec = HilbertSpec::fock(12);
  auto b = photon_counting_model(1.0, gt, spec);
  CHECK(b.expect_ban);
  CHECK(b.leakage < 1e-14);

  // Losing one of two quanta at gt = ln 2 is a fair coin.
  CHECK(b.analytic->p_y_given_x(Label{std::int64_t(1)}, Label{std::int64_t(2)}) ==
        doctest::Approx(0.5).epsilon(1e-14));

  double la = 1.0, lb = 0.36;
  Operator rho = coherent_state(Complex(1.0, 0.0), spec);
  Operator sigma = coherent_state(Complex(0.6, 0.0), spec);
  auto rep = run_conservation(b, rho, sigma);
  CHECK(std::abs(rep.residual) < 1e-10);
  CHECK(rep.d_pre == doctest::Approx(poisson_kl(la, lb)).epsilon(1e-8));
  // Thinning a Poisson field scales its relative entropy by the loss share.
  double eta = 1.0 - std::exp(-gt);
  CHECK(rep.lhs == doctest::Approx(eta * poisson_kl(la, lb)).epsilon(1e-7));

  auto cert = certify(b);
  CHECK(cert.residual_sufficient < 1e-12);
  CHECK(cert.residual_coarse < 1e-12);
  CHECK(cert.residual_pushforward < 1e-12);
  CHECK(cert.ban_satisfied);

  auto bal = run_balance(b, rho);
  CHECK(std::abs(bal.deficit) < 1e-9);
}

TEST_CASE("counter outcome count covers the kernel mass") {
  double gt = std::log(2.0);
  int nmax = 8;
  auto m = counter_outcome_count(gt, nmax, 1e-8);
  double r = 1.0 - std::exp(-gt);
  auto tail_after = [&](std::int64_t count) {
    double lp = -gt * (nmax + 1);
    double p = std::exp(lp), c = 0;
    for (std::int64_t k = 0; k < count; ++k) {
      c += p;
      p *= r * static_cast<double>(nmax + k + 1) / static_cast<double>(k + 1);
    }
    return 1.0 - c;
  };
  CHECK(tail_after(m) < 1e-8);
  CHECK(tail_after(m - 1) >= 1e-8);
  CHECK(counter_outcome_count(0.0, 5) == 1);
}

TEST_CASE("quantum counter: number statistic is weight-preserving") {
  double gt = std::log(2.0);
  HilbertSpec spec = HilbertSpec::fock(8);
  auto grid = OutcomeGrid::line(0.0, 30.0, 0.1);
  auto model = quantum_counter_model(1.0, gt, spec, grid);
  const auto& b = model.number_obs;
  CHECK(b.expect_ban);
  CHECK(b.leakage < 1e-8);

  Operator rho = coherent_state(Complex(1.0, 0.0), spec);
  Operator sigma = thermal_state(0.7, spec);
  auto rep = run_conservation(b, rho, sigma);
  CHECK(std::abs(rep.residual) < 1e-10);

  auto cert = certify(b);
  CHECK(cert.residual_sufficient < 1e-12);
  CHECK(cert.residual_coarse < 1e-10);
  CHECK(cert.residual_pushforward < 1e-10);
  CHECK(cert.ban_satisfied);
  CHECK(cert.ban_deviation < 1e-10);

  auto bal = run_balance(b, rho);
  CHECK(std::abs(bal.deficit) < 1e-8);
}

TEST_CASE("quantum counter: smooth intensity statistic rescales weights") {
  double gt = std::log(2.0);
  HilbertSpec spec = HilbertSpec::fock(8);
  auto grid = OutcomeGrid::line(0.0, 30.0, 0.1);
  auto model = quantum_counter_model(1.0, gt, spec, grid);
  const auto& b = model.poisson_obs;
  CHECK_FALSE(b.expect_ban);
  // The pushforward check runs on the amplified copy of the input grid.
  REQUIRE(b.push_grid.has_value());
  CHECK(encode_label(b.push_grid->labels.back()).real() ==
        doctest::Approx(60.0).epsilon(1e-12));
  // The evaluation grid covers the amplified support (largest count plus the
  // window) and resolves local kernel widths sqrt(x).
  REQUIRE(b.post_grid.has_value());
  double top = b.params.at("outcomes") - 1.0 + spec.dim();
  CHECK(encode_label(b.post_grid->labels.back()).real() >= top);
  for (std::size_t i = 1; i + 1 < b.post_grid->labels.size(); ++i) {
    double x = encode_label(b.post_grid->labels[i]).real();
    double step = encode_label(b.post_grid->labels[i + 1]).real() - x;
    CHECK(step <= std::max(0.1, std::sqrt(std::max(x + step, 1.0)) / 6.0) * (1.0 + 1e-12));
  }

  Operator rho = coherent_state(Complex(1.0, 0.0), spec);
  Operator sigma = thermal_state(0.7, spec);
  auto rep = run_conservation(b, rho, sigma);
  CHECK(std::abs(rep.residual) < 1e-8);
  CHECK(rep.d_pre > 0);

  auto cert = certify(b);
  CHECK(cert.residual_sufficient < 1e-10);
  // Quadrature floor: the x = 0 trapezoid boundary term at this step and rate.
  CHECK(cert.residual_coarse < 5e-3);
  CHECK(cert.residual_pushforward < 1e-6);
  CHECK_FALSE(cert.ban_satisfied);
  // The branch weights run a uniform factor e^{-gt} below the kernel.
  CHECK(cert.ban_deviation == doctest::Approx(1.0 - std::exp(-gt)).epsilon(1e-8));

  auto bal = run_balance(b, rho);
  CHECK(bal.deficit == doctest::Approx(-gt).epsilon(0.05));
}

TEST_CASE("homodyne record: conservation, certificate, and closed-form effects") {
  double gt = 1.0;
  HilbertSpec spec = HilbertSpec::fock(12);
  auto xg = homodyne_default_x_grid(spec, 2.0);
  auto yg = homodyne_default_y_grid(spec, 2.0);
  auto b = homodyne_model(1.0, gt, spec, xg, yg);
  CHECK_FALSE(b.expect_ban);
  CHECK(b.leakage < 1e-6);

  Operator rho = coherent_state(Complex(0.6, 0.0), spec);
  Operator sigma = coherent_state(Complex(0.2, 0.0), spec);
  auto rep = run_conservation(b, rho, sigma);
  CHECK(std::abs(rep.residual) < 1e-4);
  // Quadrature statistics of coherent beams: unit-variance-in-x1 Gaussians
  // whose means differ by sqrt2 (re alpha - re beta).
  CHECK(rep.d_pre == doctest::Approx(2.0 * 0.16).epsilon(1e-4));
  double s = 1.0 - std::exp(-gt);
  CHECK(rep.lhs == doctest::Approx(2.0 * s * 0.16).epsilon(1e-3));
  CHECK(rep.d_post_avg == doctest::Approx(2.0 * std::exp(-gt) * 0.16).epsilon(1e-3));

  auto cert = certify(b);
  CHECK(cert.residual_sufficient < 1e-6);
  CHECK(cert.residual_coarse < 1e-4);
  CHECK(cert.residual_pushforward < 1e-4);
  CHECK(cert.y_reach_used > 5.0);
  CHECK_FALSE(cert.ban_satisfied);
  CHECK(cert.ban_deviation == doctest::Approx(1.0 - std::exp(-0.5 * gt)).epsilon(1e-4));

  auto bal = run_balance(b, rho);
  CHECK(bal.deficit == doctest::Approx(-0.5 * gt).epsilon(0.02));

  // Completeness effects match the closed form away from the truncation edge.
  for (double y : {0.0, 0.7, -1.3}) {
    std::size_t idx = 0;
    double best = 1e300;
    for (std::size_t i = 0; i < b.inst.size(); ++i) {
      double d = std::abs(encode_label(b.inst.grid.labels[i]).real() - y);
      if (d < best) {
        best = d;
        idx = i;
      }
    }
    const auto& ch = b.inst.channel(idx);
    Operator ey = ch.ops.front().adjoint() * ch.ops.front();
    Operator closed =
        homodyne_povm_closed_form(encode_label(b.inst.grid.labels[idx]).real(), gt, spec);
    Eigen::Index keep = spec.dim() - 4;
    double defect = (ey - closed).topLeftCorner(keep, keep).norm();
    CHECK(defect < 1e-8);
  }
}

TEST_CASE("heterodyne record: conservation and the Husimi limit") {
  double gt = 1.0;
  HilbertSpec spec = HilbertSpec::fock(12);
  auto ag = OutcomeGrid::plane(-5.0, 5.0, 0.25);
  auto yg = OutcomeGrid::plane(-5.0, 5.0, 0.25);
  auto b = heterodyne_model(1.0, gt, spec, ag, yg);
  CHECK_FALSE(b.expect_ban);
  CHECK(b.leakage < 1e-4);

  Operator rho = coherent_state(Complex(0.8, 0.0), spec);
  Operator sigma = coherent_state(Complex(0.3, 0.0), spec);
  auto rep = run_conservation(b, rho, sigma);
  CHECK(std::abs(rep.residual) < 1e-3);
  // Husimi densities of coherent states are unit-variance complex Gaussians.
  CHECK(rep.d_pre == doctest::Approx(0.25).epsilon(2e-3));
  double s = 1.0 - std::exp(-gt);
  CHECK(rep.lhs == doctest::Approx(s * 0.25).epsilon(5e-3));

  auto cert = certify(b);
  CHECK(cert.residual_sufficient < 1e-6);
  CHECK(cert.residual_coarse < 1e-3);
  CHECK(cert.residual_pushforward < 1e-3);
  CHECK(cert.y_reach_used > 1.0);
  CHECK_FALSE(cert.ban_satisfied);
  CHECK(cert.ban_deviation == doctest::Approx(1.0 - std::exp(-gt)).epsilon(1e-6));

  auto bal = run_balance(b, rho);
  CHECK(bal.deficit == doctest::Approx(-gt).epsilon(0.05));

  CHECK(q_relative_entropy(rho, sigma, ag, spec) == doctest::Approx(0.25).epsilon(2e-3));

  // Long interaction: the record density converges to the Husimi function of
  // the conjugated outcome.
  auto b20 = heterodyne_model(1.0, 20.0, spec, ag, yg);
  auto dist = instrument_distribution(rho, b20.inst, 1e-3);
  double worst = 0;
  for (std::size_t i = 0; i < dist.grid.size(); ++i) {
    Complex y = std::get<Complex>(dist.grid.labels[i]);
    double s20 = 1.0 - std::exp(-20.0);
    double ref = std::exp(-std::norm(y) / s20) / (M_PI * s20);
    double full = dist.density[static_cast<Eigen::Index>(i)] * ref;
    Vector v = coherent_vector(std::conj(y), spec);
    double husimi = (v.dot(rho * v)).real() / M_PI;
    worst = std::max(worst, std::abs(full - husimi));
  }
  CHECK(worst < 1e-3);
}
