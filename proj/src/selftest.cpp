#include <cmath>
#include <cstdio>

#include "qmeas/cli.hpp"
#include "qmeas/entropy.hpp"
#include "qmeas/hilbert.hpp"
#include "qmeas/models.hpp"
#include "qmeas/serialize.hpp"

namespace qmeas {

namespace {

SelftestEntry bounded(const std::string& name, double metric, double bound) {
  SelftestEntry e;
  e.name = name;
  e.metric = metric;
  e.pass = metric <= bound;  // NaN fails
  char buf[32];
  std::snprintf(buf, sizeof buf, "bound %.3e", bound);
  e.detail = buf;
  return e;
}

SelftestEntry boolean(const std::string& name, bool ok, const std::string& detail) {
  SelftestEntry e;
  e.name = name;
  e.metric = ok ? 0.0 : 1.0;
  e.pass = ok;
  e.detail = detail;
  return e;
}

ConservationReport bundle_report(const ModelBundle& b, const Operator& rho,
                                 const Operator& sigma) {
  return conservation_report(rho, sigma, b.inst, b.povmX, bundle_options(b));
}

ShannonBalance bundle_balance(const ModelBundle& b, const Operator& rho) {
  return shannon_balance(rho, b.inst, b.povmX, b.analytic->p_y_given_x, bundle_options(b));
}

void check_space(std::vector<SelftestEntry>& out) {
  HilbertSpec spec = HilbertSpec::fock(10);
  int d = spec.dim();
  Operator a = annihilation(spec);
  Operator comm = a * a.adjoint() - a.adjoint() * a;
  double ladder =
      (comm.topLeftCorner(d - 1, d - 1) - Operator::Identity(d - 1, d - 1)).norm();
  out.push_back(bounded("space.ladder_commutator", ladder, 1e-13));

  Operator rho = coherent_state(0.8, HilbertSpec::fock(12));
  out.push_back(bounded("space.coherent_trace", std::abs(rho.trace().real() - 1.0), 1e-12));

  Operator g = 0.3 * annihilation(HilbertSpec::fock(8));
  g += 0.2 * g.adjoint() * g;
  Operator round_trip = matrix_exponential(g) * matrix_exponential(-g);
  out.push_back(bounded("space.expm_inverse",
                        (round_trip - Operator::Identity(9, 9)).norm(), 1e-10));

  HilbertSpec big = HilbertSpec::fock(40);
  Complex alpha(0.5, -0.3);
  Complex closed = quadrature_overlap(0.7, alpha);
  Complex series = hermite_point(0.7, big).cast<Complex>().dot(coherent_vector(alpha, big));
  out.push_back(bounded("space.hermite_overlap", std::abs(closed - series), 1e-10));
}

void check_grid(std::vector<SelftestEntry>& out) {
  OutcomeGrid line = OutcomeGrid::line(0.0, 10.0, 0.1);
  out.push_back(bounded("grid.line_mass", std::abs(line.weights.sum() - 10.0), 1e-12));

  // Relabeling x -> 2x with density / 2 leaves every relative entropy alone.
  OutcomeGrid scaled = line.scaled(2.0);
  Eigen::VectorXd p(line.size()), q(line.size());
  for (std::size_t i = 0; i < line.size(); ++i) {
    double x = line.real_label(i);
    p[i] = std::exp(-(x - 4.0) * (x - 4.0));
    q[i] = std::exp(-0.5 * (x - 5.0) * (x - 5.0));
  }
  p /= line.weights.dot(p);
  q /= line.weights.dot(q);
  Distribution dp{line, p}, dq{line, q};
  Distribution sp{scaled, p / 2.0}, sq{scaled, q / 2.0};
  double drift = std::abs(relative_entropy(dp, dq) - relative_entropy(sp, sq));
  out.push_back(bounded("grid.scaled_relabeling", drift, 1e-12));
}

void check_measurement(std::vector<SelftestEntry>& out, const std::string& fault) {
  ModelBundle photon = photon_counting_model(1.0, std::log(2.0), HilbertSpec::fock(10));
  KrausInstrument inst = photon.inst;
  if (fault == "completeness") {
    // Injected defect: one Kraus operator scaled, so sum M^dag M loses unity.
    std::vector<KrausChannel> channels(*inst.channels);
    for (Operator& op : channels[0].ops) op *= 1.01;
    inst = KrausInstrument::from_channels(inst.grid, std::move(channels));
  }
  out.push_back(bounded("measurement.completeness", completeness_residual(inst, 0), 1e-10));

  Operator rho = random_density(5, photon.space);
  JointDistribution joint = joint_successive_distribution(rho, photon.inst, photon.povmX);
  Distribution py = instrument_distribution(rho, photon.inst);
  double marginal = 0;
  for (std::size_t y = 0; y < photon.inst.size(); ++y) {
    double row = joint.x_grid.weights.dot(joint.density.col(y));
    marginal = std::max(marginal, std::abs(row - py.density[y]));
  }
  out.push_back(bounded("measurement.marginal_consistency", marginal, 1e-12));

  double trace_defect = 0;
  for (std::size_t y = 0; y < 3; ++y) {
    Operator post = post_state(rho, photon.inst, y);
    trace_defect = std::max(trace_defect, std::abs(post.trace().real() - 1.0));
  }
  out.push_back(bounded("measurement.post_state_trace", trace_defect, 1e-12));
}

void check_entropy(std::vector<SelftestEntry>& out) {
  HilbertSpec six = HilbertSpec::finite(6);
  OutcomeGrid grid = OutcomeGrid::discrete(6);
  Distribution p{grid, random_diagonal_density(11, six).diagonal().real()};
  Distribution q{grid, random_diagonal_density(12, six).diagonal().real()};
  double d_pq = relative_entropy(p, q);
  double metric = std::max(-std::min(d_pq, 0.0), std::abs(relative_entropy(p, p)));
  out.push_back(bounded("entropy.klein_inequality", metric, 1e-13));

  ModelBundle photon = photon_counting_model(1.0, std::log(2.0), HilbertSpec::fock(10));
  Operator rho = coherent_state(1.0, photon.space);
  Operator sigma = thermal_state(0.8, photon.space);
  JointDistribution jp = joint_successive_distribution(rho, photon.inst, photon.povmX);
  JointDistribution jq = joint_successive_distribution(sigma, photon.inst, photon.povmX);
  ChainRule chain = chain_rule_decompose(jp, jq);
  out.push_back(bounded("entropy.chain_rule",
                        std::abs(chain.total - chain.y_term - chain.conditional_term), 1e-10));
}

void check_models(std::vector<SelftestEntry>& out) {
  {
    ModelBundle qnd = qnd_symmetric_model(4, 0.1);
    double worst = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
      Operator rho = random_diagonal_density(seed, qnd.space);
      Operator sigma = random_diagonal_density(seed + 100, qnd.space);
      worst = std::max(worst, std::abs(bundle_report(qnd, rho, sigma).residual));
    }
    out.push_back(bounded("models.qnd.residual", worst, 1e-12));
    ClassicalityCertificate cert = certify(qnd);
    out.push_back(boolean("models.qnd.ban", cert.ban_satisfied && cert.ban_deviation < 1e-12,
                          "QND record must satisfy the Ban condition exactly"));
  }
  {
    HilbertSpec qubit = HilbertSpec::finite(2);
    ModelBundle two = two_level_model(max_mixed(qubit), max_mixed(qubit));
    ShannonBalance bal = bundle_balance(two, random_density(7, qubit));
    out.push_back(bounded("models.two_level.deficit", std::abs(bal.deficit + std::log(2.0)),
                          1e-10));
  }
  {
    ModelBundle photon = photon_counting_model(1.0, std::log(2.0), HilbertSpec::fock(12));
    double k = photon.analytic->p_y_given_x(Label{std::int64_t{1}}, Label{std::int64_t{2}});
    out.push_back(bounded("models.photon.kernel_point", std::abs(k - 0.5), 1e-12));
    Operator rho = coherent_state(1.0, photon.space);
    Operator sigma = thermal_state(0.8, photon.space);
    out.push_back(bounded("models.photon.residual",
                          std::abs(bundle_report(photon, rho, sigma).residual), 1e-9));
  }
  {
    CounterModel counter = quantum_counter_model(1.0, std::log(2.0), HilbertSpec::fock(8),
                                                 OutcomeGrid::line(0.0, 25.0, 0.25));
    Operator rho = coherent_state(0.9, counter.number_obs.space);
    Operator sigma = thermal_state(0.6, counter.number_obs.space);
    double worst = std::max(std::abs(bundle_report(counter.number_obs, rho, sigma).residual),
                            std::abs(bundle_report(counter.poisson_obs, rho, sigma).residual));
    out.push_back(bounded("models.counter.residual", worst, 1e-6));
    ClassicalityCertificate number_cert = certify(counter.number_obs);
    ClassicalityCertificate poisson_cert = certify(counter.poisson_obs);
    bool duality = number_cert.ban_satisfied && !poisson_cert.ban_satisfied &&
                   std::abs(poisson_cert.ban_deviation - 0.5) < 1e-6;
    out.push_back(boolean("models.counter.ban_duality", duality,
                          "number record classical, intensity record 1-e^{-gt} off"));
  }
  {
    HilbertSpec spec = HilbertSpec::fock(10);
    ModelBundle hom = homodyne_model(1.0, 1.0, spec, homodyne_default_x_grid(spec, 2.0),
                                     homodyne_default_y_grid(spec, 2.0));
    Operator rho = coherent_state(0.4, spec);
    Operator sigma = coherent_state(-0.2, spec);
    out.push_back(bounded("models.homodyne.residual",
                          std::abs(bundle_report(hom, rho, sigma).residual), 5e-4));
    ShannonBalance bal = bundle_balance(hom, rho);
    out.push_back(bounded("models.homodyne.deficit", std::abs(bal.deficit + 0.5), 2e-2));
  }
  {
    HilbertSpec spec = HilbertSpec::fock(10);
    OutcomeGrid plane = OutcomeGrid::plane(-4.5, 4.5, 0.3);
    ModelBundle het = heterodyne_model(1.0, 1.0, spec, plane, plane);
    Operator rho = coherent_state(0.5, spec);
    Operator sigma = coherent_state(0.0, spec);
    ConservationReport rep = bundle_report(het, rho, sigma);
    out.push_back(bounded("models.heterodyne.residual", std::abs(rep.residual), 5e-3));
    out.push_back(bounded("models.heterodyne.d_pre", std::abs(rep.d_pre - 0.25), 5e-3));
  }
}

void check_falsifier(std::vector<SelftestEntry>& out) {
  // Measure in the conjugate basis, record in the number basis: the
  // backaction is maximally nonclassical for X = number, and certification
  // must refuse it.
  Vector e0(2), e1(2);
  e0 << 1, 0;
  e1 << 0, 1;
  Vector vplus = (e0 + e1) / std::sqrt(2.0), vminus = (e0 - e1) / std::sqrt(2.0);
  std::vector<KrausChannel> channels(2);
  channels[0].ops = {e0 * vplus.adjoint()};
  channels[1].ops = {e1 * vminus.adjoint()};
  KrausInstrument inst = KrausInstrument::from_channels(OutcomeGrid::discrete(2), channels);
  PovmDensity povm = PovmDensity::from_effects(
      OutcomeGrid::discrete(2), {e0 * e0.adjoint(), e1 * e1.adjoint()});

  bool detected = false;
  double metric = 0;
  try {
    ClassicalityCertificate cert = extract_sufficient_statistic(inst, povm);
    metric = cert.residual_sufficient;
    detected = !(cert.residual_sufficient <= 1e-3);
  } catch (const Error&) {
    detected = true;
    metric = 1.0;
  }
  SelftestEntry e = boolean("falsifier.nonclassical_rejected", detected,
                            "conjugate-basis backaction must fail extraction");
  e.metric = metric;
  out.push_back(e);
}

void check_determinism(std::vector<SelftestEntry>& out) {
  auto render = [] {
    ModelBundle qnd = qnd_symmetric_model(3, 0.2);
    Operator rho = random_diagonal_density(21, qnd.space);
    Operator sigma = random_diagonal_density(22, qnd.space);
    std::string text = to_json(bundle_report(qnd, rho, sigma)).dump();
    text += to_json(certify(qnd)).dump();
    return text;
  };
  out.push_back(boolean("determinism.byte_identical", render() == render(),
                        "same seeds must serialize to the same bytes"));
}

}  // namespace

std::vector<SelftestEntry> run_selftest_battery(const std::string& fault) {
  if (!fault.empty() && fault != "completeness")
    throw ConfigError("unknown fault '" + fault + "' (supported: completeness)");
  std::vector<SelftestEntry> out;
  check_space(out);
  check_grid(out);
  check_measurement(out, fault);
  check_entropy(out);
  check_models(out);
  check_falsifier(out);
  check_determinism(out);
  return out;
}

}  // namespace qmeas
