#include "qmeas/measurement.hpp"

#include <cmath>

#include "doctest.h"
#include "qmeas/hilbert.hpp"

using namespace qmeas;

namespace {

Operator test_qubit_state() {
  Operator rho(2, 2);
  rho << Complex(0.7, 0), Complex(0.2, 0.1), Complex(0.2, -0.1), Complex(0.3, 0);
  return rho;
}

// Two-outcome decay instrument on a qubit: outcome 1 extracts the excitation
// with probability p, outcome 0 keeps the state with the damped amplitude.
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

TEST_CASE("povm distribution on the computational basis") {
  Distribution dist = povm_distribution(test_qubit_state(), computational_pvm(2));
  CHECK(dist.density[0] == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(dist.density[1] == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(dist.mass() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("instrument distribution and post states of the decay channel") {
  Operator rho = test_qubit_state();
  KrausInstrument inst = decay_instrument(0.36);
  Distribution dist = instrument_distribution(rho, inst);
  CHECK(dist.density[1] == doctest::Approx(0.108).epsilon(1e-14));
  CHECK(dist.density[0] == doctest::Approx(0.892).epsilon(1e-14));

  double p1 = 0;
  Operator post1 = post_state(rho, inst, 1, &p1);
  CHECK(p1 == doctest::Approx(0.108).epsilon(1e-14));
  CHECK(std::abs(post1(0, 0).real() - 1.0) < 1e-14);
  CHECK(std::abs(post1(1, 1)) < 1e-14);

  Operator post0 = post_state(rho, inst, 0);
  CHECK(post0(1, 1).real() == doctest::Approx(0.3 * 0.64 / 0.892).epsilon(1e-13));
  CHECK(post0(0, 1).real() == doctest::Approx(0.16 / 0.892).epsilon(1e-13));

  Operator ground = Operator::Zero(2, 2);
  ground(0, 0) = 1.0;
  CHECK_THROWS_AS(post_state(ground, inst, 1), NullEventError);
}

TEST_CASE("heisenberg adjoint of the decay channel") {
  KrausInstrument inst = decay_instrument(0.36);
  Operator e1 = Operator::Zero(2, 2);
  e1(1, 1) = 1.0;
  // Outcome 0, effect |1><1|: M0^dag |1><1| M0 = (1-p)|1><1|.
  Operator a = heisenberg_adjoint(inst, 0, e1);
  CHECK(a(1, 1).real() == doctest::Approx(0.64).epsilon(1e-14));
  CHECK(std::abs(a(0, 0)) < 1e-15);
  // Outcome 1, effect |0><0|: picks up p |1><1|.
  Operator e0 = Operator::Zero(2, 2);
  e0(0, 0) = 1.0;
  Operator b = heisenberg_adjoint(inst, 1, e0);
  CHECK(b(1, 1).real() == doctest::Approx(0.36).epsilon(1e-14));
}

TEST_CASE("joint successive distribution of decay then readout") {
  JointDistribution joint =
      joint_successive_distribution(test_qubit_state(), decay_instrument(0.36),
                                    computational_pvm(2));
  CHECK(joint.density(0, 0) == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(joint.density(1, 0) == doctest::Approx(0.192).epsilon(1e-14));
  CHECK(joint.density(0, 1) == doctest::Approx(0.108).epsilon(1e-14));
  CHECK(joint.density(1, 1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(joint.density.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("completeness residuals") {
  CHECK(completeness_residual(computational_pvm(3), 0) < 1e-15);
  CHECK(completeness_residual(decay_instrument(0.36), 0) < 1e-15);

  // A POVM missing 2% of the identity shows exactly that defect.
  auto spec = HilbertSpec::fock(3);
  std::vector<Operator> effects{Operator::Identity(4, 4) * 0.98};
  PovmDensity leaky = PovmDensity::from_effects(OutcomeGrid::discrete(1), std::move(effects));
  CHECK(completeness_residual(leaky, 0) == doctest::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("rank-1 evaluator matches dense effects") {
  auto spec = HilbertSpec::fock(8);
  OutcomeGrid grid = OutcomeGrid::line(-3.0, 3.0, 0.5);
  std::vector<Operator> effects;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Eigen::VectorXd h = hermite_point(grid.real_label(i), spec);
    effects.push_back((h * h.transpose()).cast<Complex>());
  }
  PovmDensity dense = PovmDensity::from_effects(grid, effects);
  PovmDensity rank1 = dense;
  rank1.vec_at = [&spec](const Label& l) {
    return hermite_point(std::get<double>(l), spec).cast<Complex>().eval();
  };

  Operator b = random_density(5, spec);
  EffectEvaluator ed(dense, grid);
  EffectEvaluator er(rank1, grid);
  Eigen::VectorXd r1 = ed.row(b, 0);
  Eigen::VectorXd r2 = er.row(b, 0);
  CHECK((r1 - r2).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("windowed diagonal evaluator shifts integer labels") {
  // Number observable with a windowed evaluator: window index k represents
  // the true state |k + offset>.
  OutcomeGrid grid = OutcomeGrid::discrete(5);
  std::vector<Operator> effects;
  for (int i = 0; i < 5; ++i) {
    Operator e = Operator::Zero(5, 5);
    e(i, i) = 1.0;
    effects.push_back(e);
  }
  PovmDensity pvm = PovmDensity::from_effects(grid, std::move(effects));
  pvm.diag_at = [](const Label& l, int dim, std::int64_t offset) {
    auto n = std::get<std::int64_t>(l);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    std::int64_t k = n - offset;
    if (k >= 0 && k < dim) v[k] = 1.0;
    return v;
  };

  Operator b = Operator::Zero(3, 3);
  b(0, 0) = 0.2;
  b(1, 1) = 0.3;
  b(2, 2) = 0.5;
  EffectEvaluator eval(pvm, grid);
  Eigen::VectorXd row = eval.row(b, 2);
  // Shifted labels keep the window distribution aligned with the grid head.
  CHECK(row[0] == doctest::Approx(0.2));
  CHECK(row[1] == doctest::Approx(0.3));
  CHECK(row[2] == doctest::Approx(0.5));
  CHECK(row[3] == 0.0);
  CHECK(row[4] == 0.0);
}

TEST_CASE("distribution mass outside tolerance is an error") {
  std::vector<Operator> effects{Operator::Identity(2, 2) * 0.9};
  PovmDensity p = PovmDensity::from_effects(OutcomeGrid::discrete(1), std::move(effects));
  Operator rho = Operator::Identity(2, 2) / 2.0;
  CHECK_THROWS_AS(povm_distribution(rho, p, 1e-6), NumericalError);
  Distribution ok = povm_distribution(rho, p, 0.2);
  CHECK(ok.density[0] == doctest::Approx(0.9));
}
