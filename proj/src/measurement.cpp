#include "qmeas/measurement.hpp"

#include <cmath>

namespace qmeas {

namespace {

double clipped(double v, const char* what) {
  if (v < -tol::clip) throw PositivityError(std::string(what) + " below the clip threshold");
  return v < 0 ? 0.0 : v;
}

void check_mass(double mass, double norm_tol, const char* what) {
  if (std::abs(mass - 1.0) > norm_tol) {
    throw NumericalError(std::string(what) + " mass " + std::to_string(mass) +
                         " outside the normalization tolerance");
  }
}

// Diagonal Kraus operators may be stored compressed as a d x 1 column.
Vector diag_vec(const Operator& m) {
  if (m.cols() == 1) return m.col(0);
  return m.diagonal();
}

}  // namespace

PovmDensity PovmDensity::from_effects(OutcomeGrid grid, std::vector<Operator> effects) {
  grid.validate();
  if (grid.size() != effects.size()) {
    throw IncompatibleError("POVM needs one effect per grid node");
  }
  Eigen::Index d = effects.front().rows();
  bool diag = true;
  for (const auto& e : effects) {
    if (e.rows() != d || e.cols() != d) throw IncompatibleError("effect dimensions differ");
    for (Eigen::Index i = 0; i < d && diag; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (i != j && e(i, j) != Complex(0, 0)) {
          diag = false;
          break;
        }
      }
    }
  }
  PovmDensity p;
  p.grid = std::move(grid);
  p.effects = std::make_shared<const std::vector<Operator>>(std::move(effects));
  p.diagonal = diag;
  return p;
}

KrausInstrument KrausInstrument::from_channels(OutcomeGrid grid,
                                               std::vector<KrausChannel> channels) {
  grid.validate();
  if (grid.size() != channels.size()) {
    throw IncompatibleError("instrument needs one channel per grid node");
  }
  Eigen::Index d = channels.front().ops.front().rows();
  for (auto& ch : channels) {
    if (ch.ops.empty()) throw IncompatibleError("channel without Kraus operators");
    ch.diagonal = true;
    for (const auto& m : ch.ops) {
      if (m.rows() != d || (m.cols() != d && m.cols() != 1)) {
        throw IncompatibleError("Kraus operator dimensions differ");
      }
      if (m.cols() == 1) continue;  // compressed diagonal
      for (Eigen::Index i = 0; i < m.rows() && ch.diagonal; ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          if (i != j && m(i, j) != Complex(0, 0)) {
            ch.diagonal = false;
            break;
          }
        }
      }
    }
  }
  KrausInstrument inst;
  inst.grid = std::move(grid);
  inst.channels = std::make_shared<const std::vector<KrausChannel>>(std::move(channels));
  return inst;
}

Distribution povm_distribution(const Operator& rho, const PovmDensity& povm, double norm_tol) {
  auto n = static_cast<Eigen::Index>(povm.size());
  Eigen::VectorXd density(n);
  if (povm.effects && povm.diagonal) {
    Eigen::VectorXd rd = rho.diagonal().real();
    for (Eigen::Index i = 0; i < n; ++i) {
      density[i] = clipped(povm.effect(i).diagonal().real().dot(rd), "outcome density");
    }
  } else if (povm.effects) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = (povm.effect(i).transpose().array() * rho.array()).sum().real();
      density[i] = clipped(v, "outcome density");
    }
  } else if (povm.vec_at) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector v = povm.vec_at(povm.grid.labels[static_cast<std::size_t>(i)]);
      density[i] = clipped(povm.vec_scale * (v.dot(rho * v)).real(), "outcome density");
    }
  } else if (povm.diag_at) {
    Eigen::VectorXd rd = rho.diagonal().real();
    int d = static_cast<int>(rd.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd e = povm.diag_at(povm.grid.labels[static_cast<std::size_t>(i)], d, 0);
      density[i] = e.size() == 0 ? 0.0 : clipped(e.dot(rd), "outcome density");
    }
  } else {
    throw IncompatibleError("POVM has no evaluatable representation");
  }
  Distribution dist{povm.grid, std::move(density)};
  check_mass(dist.mass(), norm_tol, "POVM distribution");
  return dist;
}

Operator apply_channel(const Operator& rho, const KrausChannel& ch) {
  Operator out = Operator::Zero(ch.ops.front().rows(), ch.ops.front().rows());
  for (const auto& m : ch.ops) {
    if (ch.diagonal) {
      Vector d = diag_vec(m);
      out.array() += rho.array() * (d * d.adjoint()).array();
    } else {
      out += m * rho * m.adjoint();
    }
  }
  return out;
}

double channel_output_trace(const Operator& rho, const KrausChannel& ch) {
  double v = 0;
  for (const auto& m : ch.ops) {
    if (ch.diagonal) {
      v += (diag_vec(m).cwiseAbs2().array() * rho.diagonal().real().array()).sum();
    } else {
      v += ((m * rho).array() * m.conjugate().array()).sum().real();
    }
  }
  return v;
}

Distribution instrument_distribution(const Operator& rho, const KrausInstrument& inst,
                                     double norm_tol) {
  auto n = static_cast<Eigen::Index>(inst.size());
  Eigen::VectorXd density(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    density[i] = clipped(channel_output_trace(rho, inst.channel(static_cast<std::size_t>(i))),
                         "outcome density");
  }
  Distribution dist{inst.grid, std::move(density)};
  check_mass(dist.mass(), norm_tol, "instrument distribution");
  return dist;
}

Operator post_state(const Operator& rho, const KrausInstrument& inst, std::size_t y,
                    double* density_out) {
  if (y >= inst.size()) throw ParameterError("outcome index outside the grid");
  Operator out = apply_channel(rho, inst.channel(y));
  double p = clipped(out.trace().real(), "outcome density");
  if (density_out) *density_out = p;
  if (p <= tol::prob_floor) throw NullEventError("conditioning on a null outcome");
  return out / p;
}

Operator heisenberg_adjoint(const KrausInstrument& inst, std::size_t y, const Operator& effect) {
  if (y >= inst.size()) throw ParameterError("outcome index outside the grid");
  const auto& ch = inst.channel(y);
  Operator out = Operator::Zero(effect.rows(), effect.cols());
  for (const auto& m : ch.ops) {
    if (ch.diagonal) {
      Vector d = diag_vec(m);
      out.array() += effect.array() * (d.conjugate() * d.transpose()).array();
    } else {
      out += m.adjoint() * effect * m;
    }
  }
  return out;
}

EffectEvaluator::EffectEvaluator(const PovmDensity& povm, const OutcomeGrid& eval_grid)
    : povm_(&povm), grid_(eval_grid) {
  grid_.validate();
  bool same_grid = same_labels(povm.grid, eval_grid);
  if (povm.vec_at) {
    mode_ = Mode::rank1;
    Vector probe = povm.vec_at(eval_grid.labels.front());
    factors_.resize(probe.size(), static_cast<Eigen::Index>(eval_grid.size()));
    for (std::size_t i = 0; i < eval_grid.size(); ++i) {
      factors_.col(static_cast<Eigen::Index>(i)) = povm.vec_at(eval_grid.labels[i]);
    }
  } else if (same_grid && povm.diagonal && povm.effects) {
    mode_ = Mode::stored_diag;
    auto n = static_cast<Eigen::Index>(povm.size());
    Eigen::Index d = povm.effect(0).rows();
    diags_.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      diags_.row(i) = povm.effect(i).diagonal().real().transpose();
    }
  } else if (same_grid && povm.effects) {
    mode_ = Mode::dense;
  } else if (povm.diag_at) {
    mode_ = Mode::windowed_diag;
  } else {
    throw IncompatibleError(
        "POVM cannot be evaluated on this grid: no analytic evaluator and labels differ");
  }
}

Eigen::VectorXd EffectEvaluator::row(const Operator& b, std::int64_t offset) const {
  return row_segment(b, offset, 0, static_cast<Eigen::Index>(grid_.size()));
}

Eigen::VectorXd EffectEvaluator::row_segment(const Operator& b, std::int64_t offset,
                                             Eigen::Index i0, Eigen::Index len) const {
  Eigen::VectorXd out(len);
  if (offset != 0 || mode_ == Mode::windowed_diag) {
    // Window coordinates: index k of b represents the true basis state
    // |k + offset>. Integer grids evaluate shifted labels so the relabeled
    // statistics stay on-grid; the POVM's windowed evaluator handles the rest.
    if (!povm_->diag_at) {
      throw IncompatibleError("POVM has no windowed evaluator for offset channels");
    }
    Eigen::VectorXd bd = b.diagonal().real();
    int d = static_cast<int>(bd.size());
    bool integer_labels = grid_.kind == GridKind::discrete;
    for (Eigen::Index i = 0; i < len; ++i) {
      Label l = grid_.labels[static_cast<std::size_t>(i0 + i)];
      if (integer_labels && offset != 0) l = Label(std::get<std::int64_t>(l) + offset);
      Eigen::VectorXd ediag = povm_->diag_at(l, d, offset);
      out[i] = ediag.size() == 0 ? 0.0 : ediag.dot(bd);
    }
  } else {
    switch (mode_) {
      case Mode::stored_diag:
        out = diags_.middleRows(i0, len) * b.diagonal().real();
        break;
      case Mode::dense:
        for (Eigen::Index i = 0; i < len; ++i) {
          out[i] = (povm_->effect(static_cast<std::size_t>(i0 + i)).transpose().array() *
                    b.array())
                       .sum()
                       .real();
        }
        break;
      case Mode::rank1: {
        Eigen::MatrixXcd w = b * factors_.middleCols(i0, len);
        for (Eigen::Index i = 0; i < len; ++i) {
          out[i] = povm_->vec_scale * factors_.col(i0 + i).dot(w.col(i)).real();
        }
        break;
      }
      case Mode::windowed_diag:
        break;  // handled above
    }
  }
  for (Eigen::Index i = 0; i < len; ++i) out[i] = clipped(out[i], "joint density");
  return out;
}

JointDistribution joint_successive_distribution(const Operator& rho, const KrausInstrument& inst,
                                                const PovmDensity& povm) {
  EffectEvaluator eval(povm, povm.grid);
  auto ny = static_cast<Eigen::Index>(inst.size());
  auto nx = static_cast<Eigen::Index>(povm.size());
  JointDistribution joint{povm.grid, inst.grid, Eigen::MatrixXd(nx, ny)};
  for (Eigen::Index j = 0; j < ny; ++j) {
    const auto& ch = inst.channel(static_cast<std::size_t>(j));
    joint.density.col(j) = eval.row(apply_channel(rho, ch), ch.window_offset);
  }
  return joint;
}

namespace {

double guard_block_norm(const Operator& defect, int guard) {
  Eigen::Index d = defect.rows();
  Eigen::Index keep = std::max<Eigen::Index>(1, d - guard);
  Operator block = defect.topLeftCorner(keep, keep);
  Eigen::SelfAdjointEigenSolver<Operator> es((block + block.adjoint()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double completeness_residual(const PovmDensity& povm, int guard) {
  Eigen::Index d = povm.effect(0).rows();
  Operator sum = Operator::Zero(d, d);
  for (std::size_t i = 0; i < povm.size(); ++i) {
    sum += povm.grid.weights[static_cast<Eigen::Index>(i)] * povm.effect(i);
  }
  return guard_block_norm(sum - Operator::Identity(d, d), guard);
}

double completeness_residual(const KrausInstrument& inst, int guard) {
  Eigen::Index d = inst.channel(0).ops.front().rows();
  Operator sum = Operator::Zero(d, d);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto& ch = inst.channel(i);
    Operator acc = Operator::Zero(d, d);
    for (const auto& m : ch.ops) {
      if (m.cols() == 1) {
        acc.diagonal() += m.col(0).cwiseAbs2().cast<Complex>();
      } else {
        acc += m.adjoint() * m;
      }
    }
    sum += inst.grid.weights[static_cast<Eigen::Index>(i)] * acc;
  }
  return guard_block_norm(sum - Operator::Identity(d, d), guard);
}

}  // namespace qmeas
