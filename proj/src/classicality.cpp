#include "qmeas/classicality.hpp"

#include <cmath>
#include <limits>

#include "qmeas/hilbert.hpp"

namespace qmeas {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> sample_nodes(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (n <= cap) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  // Deterministic stride; always keeps the first and last node.
  double stride = static_cast<double>(n - 1) / static_cast<double>(cap - 1);
  idx.reserve(cap);
  std::size_t prev = n;
  for (std::size_t k = 0; k < cap; ++k) {
    auto i = static_cast<std::size_t>(std::llround(static_cast<double>(k) * stride));
    if (i >= n) i = n - 1;
    if (i != prev) idx.push_back(i);
    prev = i;
  }
  return idx;
}

// Effect density at a stored node, materialized in window coordinates.
Operator effect_in_window(const PovmDensity& povm, const Label& label, int dim,
                          std::int64_t offset) {
  if (offset == 0 && povm.effects) {
    for (std::size_t i = 0; i < povm.grid.size(); ++i) {
      if (labels_close(povm.grid.labels[i], label)) return povm.effect(i);
    }
  }
  if (povm.diag_at) {
    Eigen::VectorXd d = povm.diag_at(label, dim, offset);
    Operator e = Operator::Zero(dim, dim);
    if (d.size() != 0) e.diagonal() = d.cast<Complex>();
    return e;
  }
  if (povm.vec_at && offset == 0) {
    Vector v = povm.vec_at(label);
    return povm.vec_scale * (v * v.adjoint());
  }
  throw IncompatibleError("no way to evaluate an effect at this label");
}

struct FitResult {
  double q = 0;
  double residual = 0;
  bool null_event = false;
};

// Least-squares weight of A on the candidate effect, with the relative defect
// of the rank-1 hypothesis A = q E.
FitResult fit_weight(const Operator& a, const Operator& e, double effect_scale) {
  FitResult r;
  double na = a.norm();
  double ne = e.norm();
  if (na <= tol::q_floor * effect_scale) {
    r.null_event = true;
    r.residual = 0;
    return r;
  }
  if (ne <= tol::q_floor) {
    r.null_event = true;
    r.residual = na / effect_scale;
    return r;
  }
  double overlap = (e.adjoint() * a).trace().real();
  r.q = overlap / (ne * ne);
  r.residual = (a - r.q * e).norm() / na;
  if (r.q <= tol::q_floor) {
    r.null_event = true;
    r.q = 0;
    r.residual = na / effect_scale;
  }
  return r;
}

bool channel_is_single_kraus(const KrausChannel& ch) { return ch.ops.size() == 1; }

}  // namespace

ClassicalityCertificate extract_sufficient_statistic(const KrausInstrument& inst,
                                                     const PovmDensity& povm,
                                                     const AnalyticClassicality* hint,
                                                     double cert_tol, std::size_t sample_cap) {
  ClassicalityCertificate cert;
  cert.tol_used = cert_tol;
  cert.mode = hint ? "analytic" : "extracted";
  cert.x_nodes = sample_nodes(povm.grid.size(), sample_cap);
  cert.y_nodes = sample_nodes(inst.size(), sample_cap);
  auto nx = static_cast<Eigen::Index>(cert.x_nodes.size());
  auto ny = static_cast<Eigen::Index>(cert.y_nodes.size());
  cert.q.setZero(nx, ny);
  cert.x_tilde.setConstant(nx, ny, Complex(kNan, kNan));

  int dim = static_cast<int>(inst.channel(0).ops.front().rows());

  if (!hint) {
    if (povm.grid.kind != GridKind::discrete) {
      throw ParameterError("hint-free extraction needs a discrete observable");
    }
    // Refuse observables with proportional effect pairs: the candidate search
    // could not tell them apart.
    for (std::size_t i = 0; i < povm.size(); ++i) {
      for (std::size_t j = i + 1; j < povm.size(); ++j) {
        const Operator& a = povm.effect(i);
        const Operator& b = povm.effect(j);
        double overlap = std::abs((a.adjoint() * b).trace());
        if (overlap >= (1.0 - tol::match) * a.norm() * b.norm()) {
          throw AmbiguityError("observable has proportional effects");
        }
      }
    }
  }

  double effect_scale = 0;
  if (povm.effects) {
    for (std::size_t i : cert.x_nodes) effect_scale += povm.effect(i).norm();
    effect_scale /= static_cast<double>(cert.x_nodes.size());
  } else {
    effect_scale = 1.0;
  }

  double worst = 0;
  for (Eigen::Index xi = 0; xi < nx; ++xi) {
    const Label& xl = povm.grid.labels[cert.x_nodes[static_cast<std::size_t>(xi)]];
    for (Eigen::Index yi = 0; yi < ny; ++yi) {
      std::size_t yidx = cert.y_nodes[static_cast<std::size_t>(yi)];
      const Label& yl = inst.grid.labels[yidx];
      const KrausChannel& ch = inst.channel(yidx);

      FitResult fit;
      std::optional<Label> target;
      if (hint) {
        target = hint->x_tilde(xl, yl);
        // Rank-1 fast path: single-Kraus channel against a rank-1 effect
        // family; everything reduces to scalars of w = M^dag v.
        if (channel_is_single_kraus(ch) && povm.vec_at && ch.window_offset == 0) {
          Vector v = povm.vec_at(xl);
          Vector w = ch.ops.front().adjoint() * v;
          double s = povm.vec_scale;
          double na2 = s * s * std::pow(w.squaredNorm(), 2);
          double na = std::sqrt(na2);
          if (na <= tol::q_floor || !target) {
            fit.null_event = true;
            fit.residual = na / effect_scale;
          } else {
            Vector u = povm.vec_at(*target);
            double nu2 = u.squaredNorm();
            double upw = std::norm(u.dot(w));  // |<u, w>|^2
            double overlap = s * s * upw;
            double ne2 = s * s * nu2 * nu2;
            fit.q = overlap / ne2;
            double res2 = na2 - 2 * fit.q * overlap + fit.q * fit.q * ne2;
            fit.residual = std::sqrt(std::max(0.0, res2)) / na;
            if (fit.q <= tol::q_floor) {
              fit.null_event = true;
              fit.q = 0;
            }
          }
        } else {
          Operator ex = effect_in_window(povm, xl, dim, ch.window_offset);
          Operator a = heisenberg_adjoint(inst, yidx, ex);
          if (!target) {
            fit.null_event = true;
            fit.residual = a.norm() / effect_scale;
          } else {
            Operator et = effect_in_window(povm, *target, dim, 0);
            fit = fit_weight(a, et, effect_scale);
          }
        }
      } else {
        Operator ex = effect_in_window(povm, xl, dim, ch.window_offset);
        Operator a = heisenberg_adjoint(inst, yidx, ex);
        double na = a.norm();
        if (na <= tol::q_floor * effect_scale) {
          fit.null_event = true;
        } else {
          // Candidate = stored effect with the largest normalized overlap.
          double best = -1;
          std::size_t best_i = 0;
          for (std::size_t i = 0; i < povm.size(); ++i) {
            double ov = std::abs((povm.effect(i).adjoint() * a).trace()) / povm.effect(i).norm();
            if (ov > best) {
              best = ov;
              best_i = i;
            }
          }
          fit = fit_weight(a, povm.effect(best_i), effect_scale);
          if (!fit.null_event) target = povm.grid.labels[best_i];
        }
      }

      if (!fit.null_event && target) {
        cert.q(xi, yi) = fit.q;
        cert.x_tilde(xi, yi) = encode_label(*target);
      }
      worst = std::max(worst, fit.residual);
    }
  }
  cert.residual_sufficient = worst;
  return cert;
}

void extract_coarse_graining(ClassicalityCertificate& cert, const KrausInstrument& inst,
                             const PovmDensity& povm, const AnalyticClassicality* hint,
                             int guard, double y_reach) {
  auto nx = static_cast<Eigen::Index>(cert.x_nodes.size());
  auto ny = static_cast<Eigen::Index>(cert.y_nodes.size());
  cert.kernel.setZero(ny, nx);
  int dim = static_cast<int>(inst.channel(0).ops.front().rows());

  if (hint) {
    for (Eigen::Index yi = 0; yi < ny; ++yi) {
      const Label& yl = inst.grid.labels[cert.y_nodes[static_cast<std::size_t>(yi)]];
      for (Eigen::Index xi = 0; xi < nx; ++xi) {
        const Label& xl = povm.grid.labels[cert.x_nodes[static_cast<std::size_t>(xi)]];
        cert.kernel(yi, xi) = hint->p_y_given_x(yl, xl);
      }
    }
  } else {
    if (cert.x_nodes.size() != povm.size() || cert.y_nodes.size() != inst.size()) {
      throw ParameterError("kernel recovery needs the full outcome tables");
    }
    // Projective X: the kernel is the preimage sum of the extracted weights,
    // p(y|x) = sum_{x'} [x~(x';y) = x] q(x';y).
    bool projective = true;
    for (std::size_t i = 0; i < povm.size() && projective; ++i) {
      const Operator& e = povm.effect(i);
      projective = (e * e - e).norm() < 1e-10;
    }
    if (!projective) {
      throw ParameterError("kernel recovery without a hint needs a projective observable");
    }
    for (Eigen::Index yi = 0; yi < ny; ++yi) {
      for (Eigen::Index xo = 0; xo < nx; ++xo) {
        Complex xt = cert.x_tilde(xo, yi);
        if (std::isnan(xt.real())) continue;
        for (Eigen::Index xi = 0; xi < nx; ++xi) {
          const Label& xl = povm.grid.labels[cert.x_nodes[static_cast<std::size_t>(xi)]];
          if (std::abs(encode_label(xl) - xt) <= tol::match) {
            cert.kernel(yi, xi) += cert.q(xo, yi) *
                                   povm.grid.weights[static_cast<Eigen::Index>(
                                       cert.x_nodes[static_cast<std::size_t>(xo)])];
          }
        }
      }
    }
  }

  // Certify E_y = sum_x w p(y|x) E_x on the sampled outcomes. Sampling the X
  // sum is not allowed (it must be the full quadrature), so this path uses all
  // X nodes with the kernel function or table.
  Eigen::Index keep = std::max<Eigen::Index>(1, dim - guard);
  cert.y_reach_used = std::min(cert.y_reach_used, y_reach);
  double worst = 0;
  bool any = false;
  for (Eigen::Index yi = 0; yi < ny; ++yi) {
    std::size_t yidx = cert.y_nodes[static_cast<std::size_t>(yi)];
    const Label& yl = inst.grid.labels[yidx];
    if (std::abs(encode_label(yl)) > y_reach) continue;
    const KrausChannel& ch = inst.channel(yidx);
    Operator ey = Operator::Zero(dim, dim);
    for (const auto& m : ch.ops) {
      if (m.cols() == 1) {
        ey.diagonal() += m.col(0).cwiseAbs2().cast<Complex>();
      } else {
        ey += m.adjoint() * m;
      }
    }

    Operator sum = Operator::Zero(dim, dim);
    for (std::size_t i = 0; i < povm.size(); ++i) {
      const Label& xl = povm.grid.labels[i];
      double k;
      if (hint) {
        k = hint->p_y_given_x(yl, xl);
      } else {
        // Table lookup: full grids in the hint-free discrete mode.
        k = cert.kernel(yi, static_cast<Eigen::Index>(i));
      }
      if (k == 0) continue;
      double wk = k * povm.grid.weights[static_cast<Eigen::Index>(i)];
      if (povm.vec_at && !povm.effects) {
        Vector v = povm.vec_at(xl);
        sum += (wk * povm.vec_scale) * (v * v.adjoint());
      } else if (povm.effects) {
        sum += wk * povm.effect(i);
      } else {
        Eigen::VectorXd diag = povm.diag_at(xl, static_cast<int>(dim), 0);
        if (diag.size() != 0) sum.diagonal() += wk * diag.cast<Complex>();
      }
    }
    Operator defect = (ey - sum).topLeftCorner(keep, keep);
    double scale = std::max(ey.topLeftCorner(keep, keep).norm(), tol::q_floor);
    worst = std::max(worst, defect.norm() / scale);
    any = true;
  }
  cert.residual_coarse = any ? worst : std::numeric_limits<double>::infinity();
}

namespace {

std::vector<std::function<double(const Label&)>> probe_family(const OutcomeGrid& x_grid) {
  std::vector<std::function<double(const Label&)>> probes;
  if (x_grid.kind == GridKind::plane) {
    for (int a = 0; a <= 3; ++a) {
      for (int b = 0; a + b <= 3; ++b) {
        probes.push_back([a, b](const Label& l) {
          Complex z = encode_label(l);
          return std::pow(z.real(), a) * std::pow(z.imag(), b);
        });
      }
    }
    return probes;
  }
  for (int k = 0; k <= 4; ++k) {
    probes.push_back([k](const Label& l) { return std::pow(encode_label(l).real(), k); });
  }
  double lo = encode_label(x_grid.labels.front()).real();
  double hi = encode_label(x_grid.labels.back()).real();
  for (int c = 0; c < 5; ++c) {
    double center = lo + (hi - lo) * (0.1 + 0.2 * c);
    probes.push_back([center](const Label& l) {
      double x = encode_label(l).real();
      return std::exp(-0.5 * (x - center) * (x - center));
    });
  }
  return probes;
}

}  // namespace

double check_pushforward(const KernelFn& kernel, const QFn& q, const XtFn& x_tilde,
                         const OutcomeGrid& x_grid, const OutcomeGrid& y_grid,
                         const OutcomeGrid* lhs_grid, double y_reach) {
  const OutcomeGrid& push = lhs_grid ? *lhs_grid : x_grid;
  auto probes = probe_family(x_grid);
  auto y_nodes = sample_nodes(y_grid.size(), 256);
  double worst = 0;
  bool any = false;
  for (std::size_t yn : y_nodes) {
    const Label& yl = y_grid.labels[yn];
    if (std::abs(encode_label(yl)) > y_reach) continue;
    any = true;
    for (const auto& f : probes) {
      Accum lhs;
      Accum rhs;
      Accum scale;
      for (std::size_t i = 0; i < push.size(); ++i) {
        const Label& xl = push.labels[i];
        double qv = q(xl, yl);
        // No magnitude floor here: the two sides must drop exactly the same
        // terms or rare outcomes pick up a spurious floor-level mismatch.
        if (qv > 0) {
          auto xt = x_tilde(xl, yl);
          if (xt) lhs.add(push.weights[static_cast<Eigen::Index>(i)] * qv * f(*xt));
        }
      }
      for (std::size_t i = 0; i < x_grid.size(); ++i) {
        const Label& xl = x_grid.labels[i];
        double w = x_grid.weights[static_cast<Eigen::Index>(i)];
        double k = kernel(yl, xl);
        if (k > 0) {
          rhs.add(w * k * f(xl));
          scale.add(w * k * std::abs(f(xl)));
        }
      }
      double denom = std::max(scale.value(), 1e-6);
      worst = std::max(worst, std::abs(lhs.value() - rhs.value()) / denom);
    }
  }
  return any ? worst : std::numeric_limits<double>::infinity();
}

BanResult check_ban_condition(const KernelFn& kernel, const QFn& q, const XtFn& x_tilde,
                              const OutcomeGrid& x_grid, const OutcomeGrid& y_grid,
                              double tolerance) {
  auto x_nodes = sample_nodes(x_grid.size(), 512);
  auto y_nodes = sample_nodes(y_grid.size(), 512);
  BanResult out;
  for (std::size_t xi : x_nodes) {
    const Label& xl = x_grid.labels[xi];
    for (std::size_t yi : y_nodes) {
      const Label& yl = y_grid.labels[yi];
      double qv = q(xl, yl);
      if (qv <= tol::q_floor) continue;
      auto xt = x_tilde(xl, yl);
      if (!xt) continue;
      double k = kernel(yl, *xt);
      double dev = std::abs(qv - k) / std::max({qv, k, tol::q_floor});
      out.deviation = std::max(out.deviation, dev);
    }
  }
  out.satisfied = out.deviation <= tolerance;
  return out;
}

AppendixAReport check_appendix_a_conditions(const KrausInstrument& inst,
                                            const PovmDensity& povm, double tolerance) {
  if (povm.grid.kind != GridKind::discrete || inst.grid.kind != GridKind::discrete) {
    throw ParameterError("the four-condition classification is for discrete models");
  }
  ClassicalityCertificate cert = extract_sufficient_statistic(inst, povm, nullptr, tolerance);
  extract_coarse_graining(cert, inst, povm, nullptr);

  AppendixAReport rep;
  auto nx = static_cast<Eigen::Index>(cert.x_nodes.size());
  auto ny = static_cast<Eigen::Index>(cert.y_nodes.size());

  // (1) Ban weight condition on the extracted tables.
  double ban_dev = cert.residual_sufficient;
  for (Eigen::Index xi = 0; xi < nx; ++xi) {
    for (Eigen::Index yi = 0; yi < ny; ++yi) {
      double qv = cert.q(xi, yi);
      if (qv <= tol::q_floor) continue;
      auto xt = cert.x_tilde(xi, yi);
      // x~ labels are grid indices for discrete grids.
      auto target = static_cast<Eigen::Index>(std::llround(xt.real()));
      double k = cert.kernel(yi, target);
      ban_dev = std::max(ban_dev, std::abs(qv - k) / std::max({qv, k, tol::q_floor}));
    }
  }
  rep.ban = ban_dev <= tolerance;

  // (2) every x in the kernel support has exactly one preimage under x~(.;y).
  bool unique = cert.residual_sufficient <= tolerance;
  for (Eigen::Index yi = 0; yi < ny && unique; ++yi) {
    for (Eigen::Index xi = 0; xi < nx && unique; ++xi) {
      if (cert.kernel(yi, xi) <= tolerance) continue;
      int count = 0;
      for (Eigen::Index xo = 0; xo < nx; ++xo) {
        Complex xt = cert.x_tilde(xo, yi);
        if (!std::isnan(xt.real()) &&
            std::llround(xt.real()) == static_cast<long long>(xi))
          ++count;
      }
      if (count != 1) unique = false;
    }
  }
  rep.unique_preimage = unique;

  // (3) x~(.;y) is injective on the branches that survive.
  bool injective = cert.residual_sufficient <= tolerance;
  for (Eigen::Index yi = 0; yi < ny && injective; ++yi) {
    std::vector<long long> seen;
    for (Eigen::Index xo = 0; xo < nx; ++xo) {
      if (cert.q(xo, yi) <= tol::q_floor) continue;
      Complex xt = cert.x_tilde(xo, yi);
      if (std::isnan(xt.real())) continue;
      long long t = std::llround(xt.real());
      for (long long s : seen) {
        if (s == t) {
          injective = false;
          break;
        }
      }
      seen.push_back(t);
    }
  }
  rep.injective = injective;

  // (4) basis states come out pure (or annihilated) from every channel.
  bool pure = true;
  double pure_dev = 0;
  int dim = static_cast<int>(inst.channel(0).ops.front().rows());
  for (Eigen::Index yi = 0; yi < ny; ++yi) {
    std::size_t yidx = cert.y_nodes[static_cast<std::size_t>(yi)];
    for (Eigen::Index xi = 0; xi < nx; ++xi) {
      Operator basis = Operator::Zero(dim, dim);
      basis(xi, xi) = 1.0;
      Operator out = apply_channel(basis, inst.channel(yidx));
      double tr = out.trace().real();
      if (tr <= tol::q_floor) continue;
      Eigen::SelfAdjointEigenSolver<Operator> es(out);
      Eigen::VectorXd ev = es.eigenvalues();
      double second = ev.size() > 1 ? ev[ev.size() - 2] : 0.0;
      pure_dev = std::max(pure_dev, second / tr);
    }
  }
  pure = pure_dev <= tolerance;
  rep.pure_output = pure;
  rep.worst_deviation = std::max({ban_dev, pure_dev});
  return rep;
}

FalsifierVerdict theorem3_falsifier(const KrausInstrument& inst, const PovmDensity& povm,
                                    int n_unitaries, std::uint64_t seed, double tolerance) {
  FalsifierVerdict v;
  ClassicalityCertificate cert = extract_sufficient_statistic(inst, povm, nullptr, tolerance);
  v.extraction_residual = cert.residual_sufficient;
  v.condition_holds = cert.residual_sufficient <= tolerance;

  // Block structure of the X resolution: for projective X the blocks are the
  // effect supports; invariance under every block unitary is what forces the
  // Heisenberg images onto single effects.
  int dim = static_cast<int>(inst.channel(0).ops.front().rows());
  std::vector<std::vector<int>> blocks;
  for (std::size_t i = 0; i < povm.size(); ++i) {
    const Operator& e = povm.effect(i);
    std::vector<int> cols;
    for (int c = 0; c < dim; ++c) {
      if (std::abs(e(c, c).real()) > 0.5) cols.push_back(c);
    }
    if (!cols.empty()) blocks.push_back(cols);
  }

  Rng rng(seed);
  double worst = 0;
  for (std::size_t yi = 0; yi < inst.size(); ++yi) {
    for (std::size_t xi = 0; xi < povm.size(); ++xi) {
      Operator a = heisenberg_adjoint(inst, yi, povm.effect(xi));
      double na = a.norm();
      if (na <= tol::q_floor) continue;
      // Pinching defect.
      Operator pinched = Operator::Zero(dim, dim);
      for (std::size_t k = 0; k < povm.size(); ++k) {
        pinched += povm.effect(k) * a * povm.effect(k);
      }
      worst = std::max(worst, (pinched - a).norm() / na);
      // Random block unitaries.
      for (int t = 0; t < n_unitaries; ++t) {
        Operator u = Operator::Zero(dim, dim);
        for (const auto& cols : blocks) {
          auto b = static_cast<Eigen::Index>(cols.size());
          Operator g(b, b);
          for (Eigen::Index r = 0; r < b; ++r)
            for (Eigen::Index c = 0; c < b; ++c) g(r, c) = rng.cnormal();
          Eigen::HouseholderQR<Operator> qr(g);
          Operator qmat = qr.householderQ();
          for (Eigen::Index r = 0; r < b; ++r)
            for (Eigen::Index c = 0; c < b; ++c) u(cols[r], cols[c]) = qmat(r, c);
        }
        worst = std::max(worst, (u.adjoint() * a * u - a).norm() / na);
      }
    }
  }
  v.pinching_deviation = worst;
  v.consistent = v.condition_holds == (worst <= std::sqrt(tolerance));
  return v;
}

ClassicalModel build_classical_model(const QFn& q, const XtFn& x_tilde, const Distribution& p_x,
                                     const OutcomeGrid& y_grid,
                                     const JointDistribution* joint_xy) {
  const OutcomeGrid& xg = p_x.grid;
  ClassicalModel model;
  model.nx = xg.size();
  model.ny = y_grid.size();

  if (xg.kind == GridKind::discrete && y_grid.kind == GridKind::discrete) {
    model.materialized = true;
    model.table.assign(model.nx * model.ny * model.nx, 0.0);
    auto at = [&](std::size_t xin, std::size_t y, std::size_t xout) -> double& {
      return model.table[(xin * model.ny + y) * model.nx + xout];
    };
    for (std::size_t xo = 0; xo < model.nx; ++xo) {
      for (std::size_t y = 0; y < model.ny; ++y) {
        double qv = q(xg.labels[xo], y_grid.labels[y]);
        if (qv <= tol::q_floor) continue;
        auto xt = x_tilde(xg.labels[xo], y_grid.labels[y]);
        if (!xt) continue;
        for (std::size_t xin = 0; xin < model.nx; ++xin) {
          if (labels_close(xg.labels[xin], *xt)) {
            at(xin, y, xo) = qv * p_x.density[static_cast<Eigen::Index>(xin)];
            break;
          }
        }
      }
    }
    // Marginal over x_in must reproduce the successive-measurement joint.
    if (joint_xy) {
      double worst = 0;
      for (std::size_t xo = 0; xo < model.nx; ++xo) {
        for (std::size_t y = 0; y < model.ny; ++y) {
          double m = 0;
          for (std::size_t xin = 0; xin < model.nx; ++xin) m += at(xin, y, xo);
          worst = std::max(worst, std::abs(m - joint_xy->density(static_cast<Eigen::Index>(xo),
                                                                 static_cast<Eigen::Index>(y))));
        }
      }
      model.marginal_xy_residual = worst;
    }
    // Marginal over (y, x_out) must reproduce p^X.
    double worst_in = 0;
    for (std::size_t xin = 0; xin < model.nx; ++xin) {
      double m = 0;
      for (std::size_t y = 0; y < model.ny; ++y) {
        for (std::size_t xo = 0; xo < model.nx; ++xo) {
          m += at(xin, y, xo) * y_grid.weights[static_cast<Eigen::Index>(y)] *
               xg.weights[static_cast<Eigen::Index>(xo)];
        }
      }
      worst_in = std::max(worst_in,
                          std::abs(m - p_x.density[static_cast<Eigen::Index>(xin)]));
    }
    model.marginal_xin_residual = worst_in;
    return model;
  }

  // Continuous labels: the x_in marginal is checked in law through the probe
  // family (the delta structure cannot sit on grid nodes).
  auto probes = probe_family(xg);
  double worst = 0;
  for (const auto& f : probes) {
    Accum push;
    Accum direct;
    Accum scale;
    for (std::size_t i = 0; i < xg.size(); ++i) {
      double w = xg.weights[static_cast<Eigen::Index>(i)];
      double px = p_x.density[static_cast<Eigen::Index>(i)];
      direct.add(w * px * f(xg.labels[i]));
      scale.add(w * px * std::abs(f(xg.labels[i])));
    }
    for (std::size_t y = 0; y < y_grid.size(); ++y) {
      double wy = y_grid.weights[static_cast<Eigen::Index>(y)];
      if (wy == 0) continue;
      for (std::size_t xo = 0; xo < xg.size(); ++xo) {
        double qv = q(xg.labels[xo], y_grid.labels[y]);
        if (qv <= tol::q_floor) continue;
        auto xt = x_tilde(xg.labels[xo], y_grid.labels[y]);
        if (!xt) continue;
        // Weight of the branch: q times the x_in mass transported there.
        double pxt = 0;
        // Nearest-node density stands in for p^X at the off-grid label.
        double bestd = std::numeric_limits<double>::max();
        for (std::size_t xin = 0; xin < xg.size(); ++xin) {
          double dd = std::abs(encode_label(xg.labels[xin]) - encode_label(*xt));
          if (dd < bestd) {
            bestd = dd;
            pxt = p_x.density[static_cast<Eigen::Index>(xin)];
          }
        }
        push.add(wy * xg.weights[static_cast<Eigen::Index>(xo)] * qv * pxt *
                 f(*xt));
      }
    }
    double denom = std::max(scale.value(), 1e-6);
    worst = std::max(worst, std::abs(push.value() - direct.value()) / denom);
  }
  model.marginal_xin_residual = worst;
  return model;
}

}  // namespace qmeas
