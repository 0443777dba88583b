#include "qmeas/models.hpp"

#include <cmath>

namespace qmeas {

namespace {

// Number observable with a windowed evaluator: the effect for label l has a
// single unit entry at window index l - offset.
PovmDensity number_povm(int levels) {
  std::vector<Operator> effects;
  effects.reserve(static_cast<std::size_t>(levels));
  for (int i = 0; i < levels; ++i) {
    Operator e = Operator::Zero(levels, levels);
    e(i, i) = 1.0;
    effects.push_back(std::move(e));
  }
  PovmDensity povm = PovmDensity::from_effects(OutcomeGrid::discrete(levels), effects);
  povm.diag_at = [](const Label& l, int dim, std::int64_t offset) {
    auto v = static_cast<std::int64_t>(std::llround(encode_label(l).real()));
    if (v < 0 || v - offset < 0 || v - offset >= dim) return Eigen::VectorXd();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    out[static_cast<Eigen::Index>(v - offset)] = 1.0;
    return out;
  };
  return povm;
}

double npdf_log(double y, double mean, double var) {
  double d = y - mean;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * M_PI * var);
}

std::int64_t int_of(const Label& l) {
  return static_cast<std::int64_t>(std::llround(encode_label(l).real()));
}

}  // namespace

ModelBundle qnd_model(const std::vector<Eigen::MatrixXd>& kernel,
                      const std::vector<Eigen::MatrixXd>& phases, const HilbertSpec& spec) {
  if (kernel.empty() || kernel.size() != phases.size()) {
    throw ParameterError("kernel and phase tables must pair up");
  }
  auto ny = kernel.front().rows();
  auto nx = kernel.front().cols();
  if (nx != spec.dim()) throw ParameterError("kernel columns must match the dimension");
  for (std::size_t z = 0; z < kernel.size(); ++z) {
    if (kernel[z].rows() != ny || kernel[z].cols() != nx || phases[z].rows() != ny ||
        phases[z].cols() != nx) {
      throw ParameterError("kernel and phase tables must share shapes");
    }
    if (kernel[z].minCoeff() < 0) throw ParameterError("kernel entries must be nonnegative");
  }
  for (Eigen::Index x = 0; x < nx; ++x) {
    double col = 0;
    for (const auto& k : kernel) col += k.col(x).sum();
    if (std::abs(col - 1.0) > 1e-10) {
      throw ParameterError("kernel columns must sum to one");
    }
  }

  std::vector<KrausChannel> channels;
  channels.reserve(static_cast<std::size_t>(ny));
  for (Eigen::Index y = 0; y < ny; ++y) {
    KrausChannel ch;
    for (std::size_t z = 0; z < kernel.size(); ++z) {
      if (kernel[z].row(y).maxCoeff() <= 0) continue;
      Operator op(nx, 1);
      for (Eigen::Index x = 0; x < nx; ++x) {
        op(x, 0) = std::sqrt(kernel[z](y, x)) *
                   std::exp(Complex(0, phases[z](y, x)));
      }
      ch.ops.push_back(std::move(op));
    }
    if (ch.ops.empty()) {
      Operator op = Operator::Zero(nx, 1);
      ch.ops.push_back(std::move(op));
    }
    channels.push_back(std::move(ch));
  }

  ModelBundle b;
  b.name = "qnd";
  b.space = spec;
  b.inst = KrausInstrument::from_channels(OutcomeGrid::discrete(static_cast<int>(ny)),
                                          std::move(channels));
  b.povmX = number_povm(static_cast<int>(nx));

  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(ny, nx);
  for (const auto& k : kernel) total += k;
  AnalyticClassicality a;
  a.p_y_given_x = [total](const Label& y, const Label& x) {
    return total(int_of(y), int_of(x));
  };
  a.q = [total](const Label& x, const Label& y) { return total(int_of(y), int_of(x)); };
  a.x_tilde = [](const Label& x, const Label&) -> std::optional<Label> { return x; };
  b.analytic = std::move(a);
  b.params["levels"] = static_cast<double>(nx);
  b.notes = "nondemolition readout; the statistic is the measured label itself";
  b.leakage = completeness_residual(b.inst, 0);
  b.conservation_tol = 1e-9;
  b.expect_ban = true;
  return b;
}

ModelBundle qnd_symmetric_model(int levels, double eps) {
  if (levels < 2) throw ParameterError("symmetric readout needs at least two levels");
  if (eps < 0 || eps >= 1) throw ParameterError("flip probability must sit in [0, 1)");
  Eigen::MatrixXd k(levels, levels);
  k.setConstant(levels > 1 ? eps / (levels - 1) : 0.0);
  k.diagonal().setConstant(1.0 - eps);
  Eigen::MatrixXd phase = Eigen::MatrixXd::Zero(levels, levels);
  auto b = qnd_model({k}, {phase}, HilbertSpec::finite(levels));
  b.params["eps"] = eps;
  return b;
}

ModelBundle two_level_model(const Operator& phi0, const Operator& phi1) {
  std::vector<Operator> phis{sanitize_state(phi0), sanitize_state(phi1)};
  if (phis[0].rows() != 2 || phis[1].rows() != 2) {
    throw ParameterError("repreparation targets must be qubit states");
  }
  std::vector<KrausChannel> channels;
  for (int y = 0; y < 2; ++y) {
    Eigen::SelfAdjointEigenSolver<Operator> es(phis[static_cast<std::size_t>(y)]);
    KrausChannel ch;
    for (int k = 0; k < 2; ++k) {
      double lam = es.eigenvalues()[k];
      if (lam <= tol::clip) continue;
      Operator m = Operator::Zero(2, 2);
      m.col(y) = std::sqrt(lam) * es.eigenvectors().col(k);
      ch.ops.push_back(std::move(m));
    }
    channels.push_back(std::move(ch));
  }

  ModelBundle b;
  b.name = "two_level";
  b.space = HilbertSpec::finite(2);
  b.inst = KrausInstrument::from_channels(OutcomeGrid::discrete(2), std::move(channels));
  b.povmX = number_povm(2);

  AnalyticClassicality a;
  a.p_y_given_x = [](const Label& y, const Label& x) {
    return int_of(y) == int_of(x) ? 1.0 : 0.0;
  };
  a.q = [phis](const Label& x, const Label& y) {
    auto xi = static_cast<Eigen::Index>(int_of(x));
    return phis[static_cast<std::size_t>(int_of(y))](xi, xi).real();
  };
  a.x_tilde = [](const Label&, const Label& y) -> std::optional<Label> { return y; };
  b.analytic = std::move(a);
  b.params["phi0_excited"] = phis[0](1, 1).real();
  b.params["phi1_excited"] = phis[1](1, 1).real();
  b.notes = "projective qubit readout with fixed repreparation";
  b.leakage = completeness_residual(b.inst, 0);
  b.conservation_tol = 1e-9;
  // The weight condition needs every surviving branch weight to be unity,
  // which only happens when each target is the corresponding basis state.
  b.expect_ban = true;
  for (int y = 0; y < 2 && b.expect_ban; ++y) {
    for (int x = 0; x < 2; ++x) {
      double q = phis[static_cast<std::size_t>(y)](x, x).real();
      if (q > tol::q_floor && std::abs(q - 1.0) > 1e-9) b.expect_ban = false;
    }
  }
  return b;
}

ModelBundle photon_counting_model(double gamma, double t, const HilbertSpec& spec) {
  if (gamma < 0 || t < 0) throw ParameterError("decay rate and time must be nonnegative");
  double gt = gamma * t;
  double eta = -std::expm1(-gt);  // per-quantum loss probability
  int d = static_cast<int>(spec.dim());

  std::vector<KrausChannel> channels;
  channels.reserve(static_cast<std::size_t>(d));
  for (int m = 0; m < d; ++m) {
    KrausChannel ch;
    ch.window_offset = -m;
    Operator op = Operator::Zero(d, 1);
    for (int n = m; n < d; ++n) {
      double lp = std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0);
      lp += m * std::log(eta > 0 ? eta : 1.0) - gt * (n - m);
      if (m > 0 && eta == 0) continue;
      op(n, 0) = std::exp(0.5 * lp);
    }
    ch.ops.push_back(std::move(op));
    channels.push_back(std::move(ch));
  }

  ModelBundle b;
  b.name = "photon_counting";
  b.space = spec;
  b.inst = KrausInstrument::from_channels(OutcomeGrid::discrete(d), std::move(channels));
  b.povmX = number_povm(d);

  auto pk = [gt, eta](std::int64_t m, std::int64_t n) {
    if (m < 0 || n < 0 || m > n) return 0.0;
    if (eta == 0) return m == 0 ? 1.0 : 0.0;
    double lp = std::lgamma(n + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n - m + 1.0);
    lp += m * std::log(eta) - gt * (n - m);
    return std::exp(lp);
  };
  int nmax = d - 1;
  AnalyticClassicality a;
  a.p_y_given_x = [pk](const Label& y, const Label& x) { return pk(int_of(y), int_of(x)); };
  a.q = [pk, nmax](const Label& x, const Label& y) {
    std::int64_t n = int_of(x), m = int_of(y);
    if (n + m > nmax) return 0.0;
    return pk(m, n + m);
  };
  a.x_tilde = [nmax](const Label& x, const Label& y) -> std::optional<Label> {
    std::int64_t n = int_of(x) + int_of(y);
    if (n > nmax) return std::nullopt;
    return Label{n};
  };
  b.analytic = std::move(a);
  b.params["gamma_t"] = gt;
  b.notes = "quanta lost to decay are counted; the pre-loss number is recoverable";
  b.leakage = completeness_residual(b.inst, 0);
  b.conservation_tol = 1e-9;
  b.expect_ban = true;
  return b;
}

std::int64_t counter_outcome_count(double gamma_t, int max_n, double leak_tol) {
  if (gamma_t <= 0) return 1;
  double r = -std::expm1(-gamma_t);
  double lp = -gamma_t * (max_n + 1);  // log p(0 | max_n)
  double c = std::exp(lp);
  double p = c;
  std::int64_t m = 0;
  const std::int64_t cap = 5'000'000;
  while (1.0 - c >= leak_tol) {
    p *= r * static_cast<double>(max_n + m + 1) / static_cast<double>(m + 1);
    c += p;
    ++m;
    if (m > cap) throw ParameterError("counter outcome count exceeds the supported range");
  }
  return m + 1;
}

CounterModel quantum_counter_model(double gamma, double t, const HilbertSpec& spec,
                                   const OutcomeGrid& x_grid) {
  if (gamma < 0 || t < 0) throw ParameterError("gain rate and time must be nonnegative");
  if (x_grid.kind != GridKind::line) throw ParameterError("intensity grid must be a line");
  if (encode_label(x_grid.labels.front()).real() < 0) {
    throw ParameterError("intensity labels must be nonnegative");
  }
  double gt = gamma * t;
  int d = static_cast<int>(spec.dim());
  std::int64_t n_out = counter_outcome_count(gt, d - 1);
  double r = -std::expm1(-gt);

  auto log_pk = [gt, r](std::int64_t m, std::int64_t n) {
    if (m < 0 || n < 0) return -std::numeric_limits<double>::infinity();
    if (m == 0) return -gt * (n + 1);
    double lp = std::lgamma(n + m + 1.0) - std::lgamma(m + 1.0) - std::lgamma(n + 1.0);
    return lp + m * std::log(r) - gt * (n + 1);
  };

  std::vector<KrausChannel> channels;
  channels.reserve(static_cast<std::size_t>(n_out));
  for (std::int64_t m = 0; m < n_out; ++m) {
    KrausChannel ch;
    ch.window_offset = m;
    Operator op(d, 1);
    for (int n = 0; n < d; ++n) op(n, 0) = std::exp(0.5 * log_pk(m, n));
    ch.ops.push_back(std::move(op));
    channels.push_back(std::move(ch));
  }
  KrausInstrument inst = KrausInstrument::from_channels(
      OutcomeGrid::discrete(static_cast<int>(n_out)), std::move(channels));

  double leak = 0;
  {
    double c = 0;
    for (std::int64_t m = 0; m < n_out; ++m) c += std::exp(log_pk(m, d - 1));
    leak = std::max(0.0, 1.0 - c);
  }

  auto pk = [log_pk](std::int64_t m, std::int64_t n) { return std::exp(log_pk(m, n)); };

  CounterModel model;
  {
    ModelBundle b;
    b.name = "quantum_counter_number";
    b.space = spec;
    b.inst = inst;
    b.povmX = number_povm(d);
    AnalyticClassicality a;
    a.p_y_given_x = [pk](const Label& y, const Label& x) { return pk(int_of(y), int_of(x)); };
    a.q = [pk, d](const Label& x, const Label& y) {
      std::int64_t n = int_of(x) - int_of(y);
      if (n < 0 || n >= d) return 0.0;
      return pk(int_of(y), n);
    };
    a.x_tilde = [d](const Label& x, const Label& y) -> std::optional<Label> {
      std::int64_t n = int_of(x) - int_of(y);
      if (n < 0 || n >= d) return std::nullopt;
      return Label{n};
    };
    b.analytic = std::move(a);
    // True post-measurement labels run up to N + m_max; conservation stays on
    // the relabeled window (relative entropy does not see the shift), but the
    // pushforward identity needs the extended label set to balance exactly.
    b.push_grid = OutcomeGrid::discrete(d + n_out - 1);
    b.params["gamma_t"] = gt;
    b.params["outcomes"] = static_cast<double>(n_out);
    b.notes = "amplifier readout against the number basis; gain is subtractable";
    b.leakage = leak;
    b.conservation_tol = std::max(1e-9, 50 * leak);
    b.norm_tol = std::max(1e-6, 50 * leak);
    // Counts from level n spread as a negative binomial: mean (e^{gt}-1)(n+1),
    // standard deviation at most sqrt(n+1) e^{gt}.
    double egt_n = std::exp(gt);
    b.kernel_band = [egt_n](const Label& x) {
      double n1 = static_cast<double>(int_of(x)) + 1.0;
      double mean = (egt_n - 1.0) * n1;
      double s = std::sqrt(n1) * egt_n;
      return std::pair<double, double>(std::max(0.0, mean - 12.0 * s - 10.0),
                                       mean + 12.0 * s + 10.0);
    };
    b.expect_ban = true;
    model.number_obs = std::move(b);
  }
  {
    ModelBundle b;
    b.name = "quantum_counter_poisson";
    b.space = spec;
    b.inst = inst;
    // Smooth intensity observable: effect density e^{-x} x^n / n! in the
    // number basis, evaluated windowed through a log-space start plus the
    // one-term recurrence along n.
    PovmDensity povm;
    povm.grid = x_grid;
    povm.diagonal = true;
    povm.diag_at = [](const Label& l, int dim, std::int64_t offset) {
      double x = encode_label(l).real();
      Eigen::VectorXd out(dim);
      if (x < 0 || offset < 0) return Eigen::VectorXd();
      if (x == 0) {
        out.setZero();
        if (offset == 0) out[0] = 1.0;
        return out;
      }
      double lp = -x + static_cast<double>(offset) * std::log(x) -
                  std::lgamma(static_cast<double>(offset) + 1.0);
      double p = std::exp(lp);
      for (int k = 0; k < dim; ++k) {
        out[k] = p;
        p *= x / static_cast<double>(offset + k + 1);
      }
      return out;
    };
    std::vector<Operator> effects;
    effects.reserve(x_grid.size());
    for (const auto& l : x_grid.labels) {
      Operator e = Operator::Zero(d, d);
      Eigen::VectorXd diag = povm.diag_at(l, d, 0);
      if (diag.size() != 0) e.diagonal() = diag.cast<Complex>();
      effects.push_back(std::move(e));
    }
    povm.effects = std::make_shared<const std::vector<Operator>>(std::move(effects));
    b.povmX = std::move(povm);

    double egt = std::exp(gt);
    double h0 = encode_label(x_grid.labels[1]).real() - encode_label(x_grid.labels[0]).real();
    // Post-measurement intensities concentrate near the count m with width
    // sqrt(m); a uniformly amplified grid stops resolving them once e^{gt} h
    // exceeds that width. The evaluation grid instead walks the amplified
    // support with local step sqrt(x)/6. Row-mass cancellation keeps this
    // quadrature error out of the conservation residual; it only touches the
    // reported entropy values.
    {
      double top = static_cast<double>(n_out - 1 + d);
      double x_end = top + 10.0 * std::sqrt(top + 1.0);
      std::vector<double> nodes;
      double x = 0.0;
      while (x < x_end) {
        nodes.push_back(x);
        x += std::max(h0, std::sqrt(std::max(x, 1.0)) / 6.0);
      }
      nodes.push_back(x);
      OutcomeGrid pg;
      pg.kind = GridKind::line;
      pg.labels.reserve(nodes.size());
      for (double v : nodes) pg.labels.emplace_back(v);
      pg.weights.resize(static_cast<Eigen::Index>(nodes.size()));
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        double lo = i == 0 ? nodes[0] : nodes[i - 1];
        double hi = i + 1 == nodes.size() ? nodes.back() : nodes[i + 1];
        pg.weights[static_cast<Eigen::Index>(i)] = (hi - lo) / 2.0;
      }
      b.post_grid = std::move(pg);
    }
    // The pushforward identity still runs on the amplified copy of the input
    // grid, where it cancels node for node. The premeasurement statistics are
    // read on the x~ image of the evaluation grid so the conservation
    // residual compares one quadrature against itself.
    b.push_grid = x_grid.scaled(egt);
    b.pre_grid = b.post_grid->scaled(std::exp(-gt));
    // The post density of count m lives within 12 standard deviations of the
    // poisson peaks at m..m+d; everything outside is below IEEE resolution.
    b.row_support = [d](const Label& y) {
      double m = static_cast<double>(int_of(y));
      double top = m + static_cast<double>(d);
      return std::pair<double, double>(
          std::max(0.0, m - 12.0 * std::sqrt(m + 1.0) - 10.0),
          top + 12.0 * std::sqrt(top + 1.0) + 10.0);
    };
    // The count kernel varies in x on the scale sqrt(m)/c, which drops below
    // the input step once the gain is large; the mutual-information joint gets
    // its own quadrature walking that scale.
    if (egt - 1.0 > 0) {
      double c = egt - 1.0;
      double reach = encode_label(x_grid.labels.back()).real();
      std::vector<double> nodes;
      double x = 0.0;
      while (x < reach) {
        nodes.push_back(x);
        x += std::min(h0, std::max(1e-5, 0.25 * std::sqrt(x / c)));
      }
      nodes.push_back(reach);
      OutcomeGrid mg;
      mg.kind = GridKind::line;
      mg.labels.reserve(nodes.size());
      for (double v : nodes) mg.labels.emplace_back(v);
      mg.weights.resize(static_cast<Eigen::Index>(nodes.size()));
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        double lo = i == 0 ? nodes[0] : nodes[i - 1];
        double hi = i + 1 == nodes.size() ? nodes.back() : nodes[i + 1];
        mg.weights[static_cast<Eigen::Index>(i)] = (hi - lo) / 2.0;
      }
      b.mi_grid = std::move(mg);
      b.kernel_band = [c](const Label& x) {
        double lam = c * encode_label(x).real();
        double s = std::sqrt(lam + 1.0);
        return std::pair<double, double>(std::max(0.0, lam - 12.0 * s - 10.0),
                                         lam + 12.0 * s + 10.0);
      };
    }
    AnalyticClassicality a;
    a.p_y_given_x = [r, egt](const Label& y, const Label& x) {
      // Poisson count of rate (e^{gt}-1) x.
      double lam = (egt - 1.0) * encode_label(x).real();
      auto m = int_of(y);
      if (lam <= 0) return m == 0 ? 1.0 : 0.0;
      return std::exp(-lam + m * std::log(lam) - std::lgamma(m + 1.0));
    };
    a.x_tilde = [gt](const Label& x, const Label&) -> std::optional<Label> {
      return Label{std::exp(-gt) * encode_label(x).real()};
    };
    a.q = [a, gt](const Label& x, const Label& y) {
      return std::exp(-gt) * a.p_y_given_x(y, *a.x_tilde(x, y));
    };
    b.analytic = std::move(a);
    b.params["gamma_t"] = gt;
    b.params["outcomes"] = static_cast<double>(n_out);
    b.notes = "amplifier readout against the smooth intensity observable";
    b.leakage = leak;
    b.conservation_tol = std::max(1e-6, 50 * leak);
    // The coarse-graining quadrature has a hard floor from the x = 0 endpoint
    // (trapezoid boundary term h^2 (1+c)^2 / 12 with c = e^{gt} - 1), so the
    // certificate tolerance scales with the kernel rate, not with the
    // conservation arithmetic.
    double h = encode_label(x_grid.labels[1]).real() - encode_label(x_grid.labels[0]).real();
    b.cert_tol = std::max(1e-6, h * h * std::exp(2.0 * gt) / 4.0);
    b.norm_tol = 1e-2;
    // Certified window: the kernel of count m peaks at x = m/c with width
    // sqrt(m)/c, so m + 4 sqrt(m) must stay below c R to keep the quadrature
    // on the grid (same bound governs the image side on the scaled grid).
    double c = egt - 1.0;
    double reach_x = encode_label(x_grid.labels.back()).real();
    if (c > 0) {
      double tq = -2.0 + std::sqrt(4.0 + c * reach_x);
      b.cert_y_reach = std::max(0.0, tq * tq);
    }
    b.expect_ban = false;
    model.poisson_obs = std::move(b);
  }
  return model;
}

OutcomeGrid homodyne_default_x_grid(const HilbertSpec& spec, double step_scale) {
  double reach = std::sqrt(2.0 * static_cast<double>(spec.dim())) + 4.0;
  return OutcomeGrid::line(-reach, reach, 0.05 * step_scale);
}

OutcomeGrid homodyne_default_y_grid(const HilbertSpec& spec, double step_scale) {
  double reach = std::sqrt(2.0 * static_cast<double>(spec.dim())) + 4.0;
  return OutcomeGrid::line(-reach, reach, 0.05 * step_scale);
}

ModelBundle homodyne_model(double gamma, double t, const HilbertSpec& spec,
                           const OutcomeGrid& x_grid, const OutcomeGrid& y_grid) {
  if (gamma < 0 || t < 0) throw ParameterError("decay rate and time must be nonnegative");
  if (x_grid.kind != GridKind::line || y_grid.kind != GridKind::line) {
    throw ParameterError("quadrature grids must be lines");
  }
  double gt = gamma * t;
  double s = -std::expm1(-gt);
  if (s <= 0) throw ParameterError("the record needs a positive interaction time");
  int d = static_cast<int>(spec.dim());

  OutcomeGrid yg = y_grid.reweighted(
      [s](const Label& l) { return std::exp(npdf_log(encode_label(l).real(), 0.0, s)); });

  Operator a_op = annihilation(spec);
  Operator decay = Operator::Zero(d, d);
  for (int n = 0; n < d; ++n) decay(n, n) = std::exp(-0.5 * gt * n);

  std::vector<KrausChannel> channels;
  channels.reserve(yg.size());
  for (const auto& l : yg.labels) {
    double y = encode_label(l).real();
    Operator gen = y * a_op - 0.5 * s * (a_op * a_op);
    KrausChannel ch;
    ch.ops.push_back(decay * matrix_exponential(gen));
    channels.push_back(std::move(ch));
  }

  ModelBundle b;
  b.name = "homodyne";
  b.space = spec;
  b.inst = KrausInstrument::from_channels(yg, std::move(channels));

  PovmDensity povm;
  povm.grid = x_grid;
  povm.vec_scale = 1.0;
  HilbertSpec sp = spec;
  povm.vec_at = [sp](const Label& l) {
    return hermite_point(encode_label(l).real(), sp).cast<Complex>().eval();
  };
  b.povmX = std::move(povm);

  double var_k = s * std::exp(-gt);
  AnalyticClassicality a;
  a.p_y_given_x = [s, var_k](const Label& y, const Label& x) {
    double yv = encode_label(y).real();
    double xv = encode_label(x).real();
    return std::exp(npdf_log(yv, std::sqrt(2.0) * s * xv, var_k) - npdf_log(yv, 0.0, s));
  };
  a.x_tilde = [gt](const Label& x, const Label& y) -> std::optional<Label> {
    return Label{std::exp(-0.5 * gt) * encode_label(x).real() +
                 encode_label(y).real() / std::sqrt(2.0)};
  };
  a.q = [a, gt](const Label& x, const Label& y) {
    return std::exp(-0.5 * gt) * a.p_y_given_x(y, *a.x_tilde(x, y));
  };
  b.analytic = std::move(a);
  b.params["gamma_t"] = gt;
  b.notes = "continuous quadrature record under decay";
  b.leakage = completeness_residual(b.inst, 4);
  b.guard = 4;
  b.conservation_tol = 1e-4;
  b.cert_tol = 1e-4;
  b.norm_tol = 1e-3;
  // Certified window: past it the kernel of outcome y peaks within 4 widths
  // of the x-grid edge on one side of the pushforward (direct side peak
  // x = y / (sqrt2 s), image side peak x = e^{-gt/2} y / (sqrt2 s)).
  {
    double reach_x = std::max(std::abs(encode_label(x_grid.labels.front()).real()),
                              std::abs(encode_label(x_grid.labels.back()).real()));
    double sig_r = std::exp(-0.5 * gt) / std::sqrt(2.0 * s);
    double sig_l = 1.0 / std::sqrt(2.0 * s);
    double r1 = std::sqrt(2.0) * s * (reach_x - 4.0 * sig_r);
    double r2 = std::sqrt(2.0) * s * std::exp(0.5 * gt) * (reach_x - 4.0 * sig_l);
    b.cert_y_reach = std::max(0.0, std::min(r1, r2));
  }
  b.expect_ban = false;
  return b;
}

Operator homodyne_povm_closed_form(double y, double gamma_t, const HilbertSpec& spec,
                                   int margin) {
  int d = static_cast<int>(spec.dim());
  HilbertSpec wide = HilbertSpec::fock(d - 1 + margin);
  Operator a_op = annihilation(wide);
  Operator x1 = (a_op + a_op.adjoint()) / std::sqrt(2.0);
  Operator shift = x1 - (y / std::sqrt(2.0)) * Operator::Identity(x1.rows(), x1.cols());
  Operator arg = x1 * x1 - std::exp(gamma_t) * (shift * shift);
  arg += (0.5 * gamma_t) * Operator::Identity(x1.rows(), x1.cols());
  Operator full = matrix_exponential(arg);
  return full.topLeftCorner(d, d);
}

PovmDensity coherent_povm(const OutcomeGrid& alpha_grid, const HilbertSpec& spec) {
  if (alpha_grid.kind != GridKind::plane) {
    throw ParameterError("coherent-state observables live on a plane grid");
  }
  PovmDensity povm;
  povm.grid = alpha_grid;
  povm.vec_scale = 1.0 / M_PI;
  HilbertSpec sp = spec;
  povm.vec_at = [sp](const Label& l) { return coherent_vector(std::get<Complex>(l), sp); };
  return povm;
}

ModelBundle heterodyne_model(double gamma, double t, const HilbertSpec& spec,
                             const OutcomeGrid& alpha_grid, const OutcomeGrid& y_grid) {
  if (gamma < 0 || t < 0) throw ParameterError("decay rate and time must be nonnegative");
  if (y_grid.kind != GridKind::plane) throw ParameterError("record grid must be a plane");
  double gt = gamma * t;
  double s = -std::expm1(-gt);
  if (s <= 0) throw ParameterError("the record needs a positive interaction time");
  int d = static_cast<int>(spec.dim());

  OutcomeGrid yg = y_grid.reweighted([s](const Label& l) {
    Complex y = std::get<Complex>(l);
    return std::exp(-std::norm(y) / s) / (M_PI * s);
  });

  Operator a_op = annihilation(spec);
  Operator decay = Operator::Zero(d, d);
  for (int n = 0; n < d; ++n) decay(n, n) = std::exp(-0.5 * gt * n);

  std::vector<KrausChannel> channels;
  channels.reserve(yg.size());
  for (const auto& l : yg.labels) {
    Complex y = std::get<Complex>(l);
    KrausChannel ch;
    ch.ops.push_back(decay * matrix_exponential(y * a_op));
    channels.push_back(std::move(ch));
  }

  ModelBundle b;
  b.name = "heterodyne";
  b.space = spec;
  b.inst = KrausInstrument::from_channels(yg, std::move(channels));
  b.povmX = coherent_povm(alpha_grid, spec);

  double egt = std::exp(gt);
  AnalyticClassicality a;
  a.p_y_given_x = [gt, egt](const Label& y, const Label& x) {
    Complex yv = std::get<Complex>(y);
    Complex av = std::get<Complex>(x);
    return std::exp(gt + std::norm(av) - egt * std::norm(yv - std::conj(av)));
  };
  a.x_tilde = [gt](const Label& x, const Label& y) -> std::optional<Label> {
    return Label{std::exp(-0.5 * gt) * std::get<Complex>(x) + std::conj(std::get<Complex>(y))};
  };
  a.q = [gt](const Label& x, const Label& y) {
    Complex xt = std::exp(-0.5 * gt) * std::get<Complex>(x) + std::conj(std::get<Complex>(y));
    return std::exp(std::norm(xt) - std::norm(std::get<Complex>(x)));
  };
  b.analytic = std::move(a);
  b.params["gamma_t"] = gt;
  b.notes = "simultaneous quadrature record; the outcome tracks the Husimi density";
  b.leakage = completeness_residual(b.inst, 4);
  b.guard = 4;
  b.conservation_tol = 1e-3;
  b.cert_tol = 1e-3;
  b.norm_tol = 1e-2;
  // Certified window, as for the quadrature record: the amplified kernel peak
  // |a| = |y| e^{gt} / (e^{gt}-1) must clear the alpha-grid edge by 4 widths
  // on the direct side, |a| = e^{-gt/2}|y| / s on the image side.
  {
    double reach_a = std::max(std::abs(encode_label(alpha_grid.labels.front()).real()),
                              std::abs(encode_label(alpha_grid.labels.back()).real()));
    double sig_r = 1.0 / std::sqrt(2.0 * (egt - 1.0));
    double sig_l = 1.0 / std::sqrt(2.0 * s);
    double r1 = s * (reach_a - 4.0 * sig_r);
    double r2 = s * std::exp(0.5 * gt) * (reach_a - 4.0 * sig_l);
    b.cert_y_reach = std::max(0.0, std::min(r1, r2));
  }
  b.expect_ban = false;
  return b;
}

double q_relative_entropy(const Operator& rho, const Operator& sigma,
                          const OutcomeGrid& alpha_grid, const HilbertSpec& spec) {
  PovmDensity povm = coherent_povm(alpha_grid, spec);
  Distribution qr = povm_distribution(rho, povm, 0.05);
  Distribution qs = povm_distribution(sigma, povm, 0.05);
  return relative_entropy(qr, qs);
}

ClassicalityCertificate certify(const ModelBundle& bundle) {
  const AnalyticClassicality* hint = bundle.analytic ? &*bundle.analytic : nullptr;
  ClassicalityCertificate cert =
      extract_sufficient_statistic(bundle.inst, bundle.povmX, hint, bundle.cert_tol);
  extract_coarse_graining(cert, bundle.inst, bundle.povmX, hint, bundle.guard,
                          bundle.cert_y_reach);
  const OutcomeGrid* push = bundle.push_grid   ? &*bundle.push_grid
                            : bundle.post_grid ? &*bundle.post_grid
                                               : nullptr;
  if (hint) {
    cert.residual_pushforward =
        check_pushforward(hint->p_y_given_x, hint->q, hint->x_tilde, bundle.povmX.grid,
                          bundle.inst.grid, push, bundle.cert_y_reach);
    BanResult ban = check_ban_condition(hint->p_y_given_x, hint->q, hint->x_tilde,
                                        bundle.povmX.grid, bundle.inst.grid, bundle.ban_tol);
    cert.ban_satisfied = ban.satisfied;
    cert.ban_deviation = ban.deviation;
  } else {
    auto q = [&cert, &bundle](const Label& x, const Label& y) {
      return cert.q(static_cast<Eigen::Index>(int_of(x)), static_cast<Eigen::Index>(int_of(y)));
    };
    XtFn xt = [&cert](const Label& x, const Label& y) -> std::optional<Label> {
      Complex t = cert.x_tilde(static_cast<Eigen::Index>(int_of(x)),
                               static_cast<Eigen::Index>(int_of(y)));
      if (std::isnan(t.real())) return std::nullopt;
      return Label{static_cast<std::int64_t>(std::llround(t.real()))};
    };
    KernelFn k = [&cert](const Label& y, const Label& x) {
      return cert.kernel(static_cast<Eigen::Index>(int_of(y)),
                         static_cast<Eigen::Index>(int_of(x)));
    };
    cert.residual_pushforward =
        check_pushforward(k, q, xt, bundle.povmX.grid, bundle.inst.grid);
    BanResult ban =
        check_ban_condition(k, q, xt, bundle.povmX.grid, bundle.inst.grid, bundle.ban_tol);
    cert.ban_satisfied = ban.satisfied;
    cert.ban_deviation = ban.deviation;
  }
  return cert;
}

ReportOptions bundle_options(const ModelBundle& bundle) {
  ReportOptions opts;
  opts.post_grid = bundle.post_grid;
  opts.pre_grid = bundle.pre_grid;
  opts.row_support = bundle.row_support;
  opts.mi_grid = bundle.mi_grid;
  opts.kernel_band = bundle.kernel_band;
  opts.norm_tol = bundle.norm_tol;
  return opts;
}

}  // namespace qmeas
