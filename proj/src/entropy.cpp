#include "qmeas/entropy.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace qmeas {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_matching(const OutcomeGrid& a, const OutcomeGrid& b) {
  if (!same_labels(a, b) || (a.weights - b.weights).cwiseAbs().maxCoeff() > tol::match) {
    throw IncompatibleError("distributions live on different grids");
  }
}

// sum w p ln(p/q) with the zero conventions: p at or below the density floor
// contributes nothing; p above it with q at or below it is +infinity.
double kl_sum(const Eigen::VectorXd& w, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  Accum acc;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (p[i] <= tol::density_floor) continue;
    if (q[i] <= tol::density_floor) return kInf;
    acc.add(w[i] * p[i] * std::log(p[i] / q[i]));
  }
  return acc.value();
}

}  // namespace

double relative_entropy(const Distribution& p, const Distribution& q) {
  require_matching(p.grid, q.grid);
  return kl_sum(p.grid.weights, p.density, q.density);
}

double shannon_entropy(const Distribution& p) {
  Accum acc;
  for (Eigen::Index i = 0; i < p.density.size(); ++i) {
    double v = p.density[i];
    if (v <= tol::density_floor) continue;
    acc.add(-p.grid.weights[i] * v * std::log(v));
  }
  return acc.value();
}

double mutual_information(const JointDistribution& joint) {
  const Eigen::VectorXd& wx = joint.x_grid.weights;
  const Eigen::VectorXd& wy = joint.y_grid.weights;
  Eigen::VectorXd margx = joint.density * wy;
  Eigen::VectorXd margy = joint.density.transpose() * wx;
  Accum acc;
  for (Eigen::Index i = 0; i < margx.size(); ++i) {
    for (Eigen::Index j = 0; j < margy.size(); ++j) {
      double v = joint.density(i, j);
      if (v <= tol::density_floor) continue;
      acc.add(wx[i] * wy[j] * v * std::log(v / (margx[i] * margy[j])));
    }
  }
  return acc.value();
}

ChainRule chain_rule_decompose(const JointDistribution& p, const JointDistribution& q) {
  require_matching(p.x_grid, q.x_grid);
  require_matching(p.y_grid, q.y_grid);
  const Eigen::VectorXd& wx = p.x_grid.weights;
  const Eigen::VectorXd& wy = p.y_grid.weights;
  Eigen::VectorXd py = p.density.transpose() * wx;
  Eigen::VectorXd qy = q.density.transpose() * wx;

  ChainRule out{0, 0, 0};
  out.y_term = kl_sum(wy, py, qy);
  Accum total;
  Accum cond;
  bool total_inf = false;
  bool cond_inf = false;
  for (Eigen::Index j = 0; j < wy.size(); ++j) {
    for (Eigen::Index i = 0; i < wx.size(); ++i) {
      double v = p.density(i, j);
      if (v <= tol::density_floor) continue;
      if (q.density(i, j) <= tol::density_floor) {
        total_inf = true;
        cond_inf = true;
        break;
      }
      double lr = std::log(v / q.density(i, j));
      total.add(wx[i] * wy[j] * v * lr);
      if (py[j] > tol::density_floor && qy[j] > tol::density_floor) {
        cond.add(wx[i] * wy[j] * v * (lr - std::log(py[j] / qy[j])));
      }
    }
  }
  out.total = total_inf ? kInf : total.value();
  out.conditional_term = cond_inf ? kInf : cond.value();
  return out;
}

namespace {

struct RowStats {
  double mass_r = 0;
  double mass_s = 0;
  double d_cond = 0;        // D(row_r/mass_r || row_s/mass_s), +inf sentinel
  double joint_term = 0;    // sum_i w row_r ln(row_r/row_s), +inf sentinel
};

// Node index range [a, b) of a support interval on a monotone line grid;
// the full range when no support bound applies.
std::pair<Eigen::Index, Eigen::Index> support_range(const SupportFn& support,
                                                    const OutcomeGrid& grid, const Label& yl) {
  auto n = static_cast<Eigen::Index>(grid.size());
  if (!support || grid.kind != GridKind::line) return {0, n};
  auto [lo, hi] = support(yl);
  auto coord = [&](Eigen::Index i) {
    return encode_label(grid.labels[static_cast<std::size_t>(i)]).real();
  };
  Eigen::Index l = 0, r = n;
  while (l < r) {
    Eigen::Index m = l + (r - l) / 2;
    if (coord(m) < lo) l = m + 1; else r = m;
  }
  Eigen::Index a = l;
  r = n;
  while (l < r) {
    Eigen::Index m = l + (r - l) / 2;
    if (coord(m) <= hi) l = m + 1; else r = m;
  }
  return {a, l};
}

RowStats row_stats(const Eigen::VectorXd& w, const Eigen::VectorXd& row_r,
                   const Eigen::VectorXd& row_s) {
  RowStats st;
  st.mass_r = w.dot(row_r);
  st.mass_s = w.dot(row_s);
  if (st.mass_r <= tol::density_floor) {
    st.d_cond = 0;
    st.joint_term = 0;
    return st;
  }
  Accum cond;
  Accum joint;
  bool inf = false;
  double lm = (st.mass_s > tol::density_floor) ? std::log(st.mass_r / st.mass_s) : kInf;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    // Nodes holding a sub-prob_floor fraction of the row's mass cannot move
    // any aggregate. Skipping them keeps underflowing tails, where the two
    // densities fall off the IEEE range at slightly different nodes, from
    // masquerading as support mismatch; a genuine mismatch carries O(1)
    // conditional mass and still trips the sentinel below.
    if (w[i] * row_r[i] <= tol::prob_floor * st.mass_r) continue;
    if (row_s[i] <= tol::density_floor) {
      inf = true;
      break;
    }
    double lr = std::log(row_r[i] / row_s[i]);
    joint.add(w[i] * row_r[i] * lr);
    cond.add(w[i] * row_r[i] * (lr - lm));
  }
  if (inf || !std::isfinite(lm)) {
    st.d_cond = kInf;
    st.joint_term = inf ? kInf : joint.value();
    return st;
  }
  st.d_cond = cond.value() / st.mass_r;
  st.joint_term = joint.value();
  return st;
}

}  // namespace

ConservationReport conservation_report(const Operator& rho, const Operator& sigma,
                                       const KrausInstrument& inst, const PovmDensity& povm,
                                       const ReportOptions& opts) {
  Distribution px_r, px_s;
  if (opts.pre_grid) {
    EffectEvaluator pre_eval(povm, *opts.pre_grid);
    auto checked = [&](Eigen::VectorXd density) {
      if (density.minCoeff() < -tol::clip)
        throw PositivityError("pre-grid outcome density below zero");
      Distribution dist{*opts.pre_grid, density.cwiseMax(0.0)};
      if (std::abs(dist.mass() - 1.0) > opts.norm_tol)
        throw NumericalError("pre-grid distribution mass off by " +
                             std::to_string(dist.mass() - 1.0));
      return dist;
    };
    px_r = checked(pre_eval.row(rho, 0));
    px_s = checked(pre_eval.row(sigma, 0));
  } else {
    px_r = povm_distribution(rho, povm, opts.norm_tol);
    px_s = povm_distribution(sigma, povm, opts.norm_tol);
  }

  const OutcomeGrid& eval_grid = opts.post_grid ? *opts.post_grid : povm.grid;
  EffectEvaluator eval(povm, eval_grid);
  const Eigen::VectorXd& w = eval_grid.weights;

  auto ny = static_cast<Eigen::Index>(inst.size());
  Accum lhs_d;
  Accum d_post;
  Accum joint_d;
  bool lhs_inf = false;
  bool post_inf = false;
  bool joint_inf = false;

  ConservationReport report;
  if (opts.keep_rows) report.per_outcome.reserve(static_cast<std::size_t>(ny));

  for (Eigen::Index j = 0; j < ny; ++j) {
    const auto& ch = inst.channel(static_cast<std::size_t>(j));
    const Label& yl = inst.grid.labels[static_cast<std::size_t>(j)];
    double wy = inst.grid.weights[j];
    // Outcomes carrying probability mass at or below prob_floor are null
    // events: they condition on nothing and drop out of every aggregate
    // symmetrically (their post densities sit under the IEEE range, so keeping
    // them would turn a ~1e-30 contribution into a spurious infinity). The
    // exact channel trace gates them before any grid work.
    double tr_r = channel_output_trace(rho, ch);
    bool null_event = wy * tr_r <= tol::prob_floor;
    RowStats st;
    double mass_shown = tr_r;
    if (!null_event) {
      auto [i0, i1] = support_range(opts.row_support, eval_grid, yl);
      if (i1 <= i0) {
        null_event = true;
      } else {
        Eigen::Index len = i1 - i0;
        Eigen::VectorXd row_r =
            eval.row_segment(apply_channel(rho, ch), ch.window_offset, i0, len);
        Eigen::VectorXd row_s =
            eval.row_segment(apply_channel(sigma, ch), ch.window_offset, i0, len);
        st = row_stats(w.segment(i0, len), row_r, row_s);
        mass_shown = st.mass_r;
        // The aggregates run on quadrature mass, so the gate closes on it too.
        null_event = wy * st.mass_r <= tol::prob_floor;
      }
    }
    if (!null_event) {
      if (st.mass_s <= tol::density_floor) {
        lhs_inf = true;
      } else {
        lhs_d.add(wy * st.mass_r * std::log(st.mass_r / st.mass_s));
      }
      if (std::isinf(st.d_cond)) {
        post_inf = true;
      } else {
        d_post.add(wy * st.mass_r * st.d_cond);
      }
      if (std::isinf(st.joint_term)) {
        joint_inf = true;
      } else {
        joint_d.add(wy * st.joint_term);
      }
    }
    if (opts.keep_rows) {
      double shown = null_event ? std::numeric_limits<double>::quiet_NaN() : st.d_cond;
      report.per_outcome.push_back(PerOutcomeRow{yl, mass_shown, shown});
    }
  }

  report.d_pre = relative_entropy(px_r, px_s);
  report.lhs = lhs_inf ? kInf : lhs_d.value();
  report.d_post_avg = post_inf ? kInf : d_post.value();
  double joint_total = joint_inf ? kInf : joint_d.value();

  report.finite = std::isfinite(report.lhs) && std::isfinite(report.d_pre) &&
                  std::isfinite(report.d_post_avg) && std::isfinite(joint_total);
  report.residual = report.lhs - (report.d_pre - report.d_post_avg);
  report.joint_residual = joint_total - report.d_pre;
  if (report.finite) {
    double agree = std::abs(report.residual - report.joint_residual);
    if (agree > tol::residual_agree * std::max(1.0, std::abs(report.d_pre))) {
      char buf[96];
      std::snprintf(buf, sizeof(buf),
                    "conservation residual forms disagree: %.3e vs %.3e",
                    report.residual, report.joint_residual);
      throw NumericalError(buf);
    }
  }
  return report;
}

ShannonBalance shannon_balance(const Operator& rho, const KrausInstrument& inst,
                               const PovmDensity& povm, const KernelFn& p_y_given_x,
                               const ReportOptions& opts) {
  Distribution px = povm_distribution(rho, povm, opts.norm_tol);
  ShannonBalance out;
  out.h_pre = shannon_entropy(px);

  const OutcomeGrid& eval_grid = opts.post_grid ? *opts.post_grid : povm.grid;
  EffectEvaluator eval(povm, eval_grid);
  const Eigen::VectorXd& w = eval_grid.weights;

  auto ny = static_cast<Eigen::Index>(inst.size());
  Accum h_post;
  for (Eigen::Index j = 0; j < ny; ++j) {
    const auto& ch = inst.channel(static_cast<std::size_t>(j));
    double wy_j = inst.grid.weights[j];
    // Null events (see conservation_report) carry no weight in the average.
    if (wy_j * channel_output_trace(rho, ch) <= tol::prob_floor) continue;
    auto [i0, i1] = support_range(opts.row_support, eval_grid,
                                  inst.grid.labels[static_cast<std::size_t>(j)]);
    if (i1 <= i0) continue;
    Eigen::Index len = i1 - i0;
    Eigen::VectorXd row = eval.row_segment(apply_channel(rho, ch), ch.window_offset, i0, len);
    double mass = w.segment(i0, len).dot(row);
    if (wy_j * mass <= tol::prob_floor) continue;
    Accum h;
    for (Eigen::Index i = 0; i < len; ++i) {
      if (row[i] <= tol::density_floor) continue;
      double c = row[i] / mass;
      h.add(-w[i0 + i] * c * std::log(c));
    }
    h_post.add(wy_j * mass * h.value());
  }
  out.h_post_avg = h_post.value();

  // I(X:Y) of the input-output joint p^X(x) p(y|x). Two passes keep the
  // kernel unmaterialized: outcome sets can be five orders of magnitude
  // larger than the X grid. An optional finer X quadrature resolves kernels
  // that vary below the observable grid's step, and kernel bands cut the y
  // sums to the outcomes actually reachable from each x.
  Distribution mi_px = px;
  if (opts.mi_grid) {
    EffectEvaluator mi_eval(povm, *opts.mi_grid);
    Distribution cand{*opts.mi_grid, mi_eval.row(rho, 0)};
    if (std::abs(cand.mass() - 1.0) > opts.norm_tol) {
      throw NumericalError("mutual-information grid mass off by " +
                           std::to_string(cand.mass() - 1.0));
    }
    mi_px = std::move(cand);
  }
  auto nx = static_cast<Eigen::Index>(mi_px.grid.size());
  const Eigen::VectorXd& wx = mi_px.grid.weights;
  const Eigen::VectorXd& wy = inst.grid.weights;
  bool discrete_y = inst.grid.kind == GridKind::discrete;
  auto y_band = [&](const Label& xl) -> std::pair<Eigen::Index, Eigen::Index> {
    if (!opts.kernel_band || !discrete_y) return {0, ny};
    auto [lo, hi] = opts.kernel_band(xl);
    auto a = static_cast<Eigen::Index>(std::max(0.0, std::ceil(lo)));
    auto b = static_cast<Eigen::Index>(
                 std::min(static_cast<double>(ny - 1), std::floor(hi))) + 1;
    return a < b ? std::pair<Eigen::Index, Eigen::Index>{a, b}
                 : std::pair<Eigen::Index, Eigen::Index>{0, 0};
  };
  Eigen::VectorXd ky = Eigen::VectorXd::Zero(ny);
  for (Eigen::Index i = 0; i < nx; ++i) {
    if (mi_px.density[i] <= tol::density_floor) continue;
    double wpx = wx[i] * mi_px.density[i];
    auto [jb, je] = y_band(mi_px.grid.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = jb; j < je; ++j) {
      double k = p_y_given_x(inst.grid.labels[static_cast<std::size_t>(j)],
                             mi_px.grid.labels[static_cast<std::size_t>(i)]);
      if (k > 0) ky[j] += wpx * k;
    }
  }
  Accum mi;
  bool inf = false;
  for (Eigen::Index i = 0; i < nx && !inf; ++i) {
    if (mi_px.density[i] <= tol::density_floor) continue;
    double wpx = wx[i] * mi_px.density[i];
    auto [jb, je] = y_band(mi_px.grid.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = jb; j < je; ++j) {
      double k = p_y_given_x(inst.grid.labels[static_cast<std::size_t>(j)],
                             mi_px.grid.labels[static_cast<std::size_t>(i)]);
      // Cells below prob_floor in joint mass are null events; dropping them
      // keeps underflowed marginals ky from reading as support mismatch.
      if (wpx * wy[j] * k <= tol::prob_floor) continue;
      if (ky[j] <= tol::density_floor) {
        inf = true;
        break;
      }
      mi.add(wpx * wy[j] * k * std::log(k / ky[j]));
    }
  }
  out.mutual_info = inf ? kInf : mi.value();
  out.finite = std::isfinite(out.h_pre) && std::isfinite(out.h_post_avg) &&
               std::isfinite(out.mutual_info);
  out.deficit = (out.h_pre - out.h_post_avg) - out.mutual_info;
  return out;
}

}  // namespace qmeas
