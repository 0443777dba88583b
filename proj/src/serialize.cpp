#include "qmeas/serialize.hpp"

#include <cmath>

namespace qmeas {

namespace {

// JSON has no inf/nan literals; encode them as strings so reports stay honest
// instead of silently becoming null.
Json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

Json complex_pair(const Complex& z) { return Json::array({num(z.real()), num(z.imag())}); }

Json real_matrix(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(num(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json complex_matrix(const Eigen::MatrixXcd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_pair(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Json to_json(const Label& label) {
  if (std::holds_alternative<std::int64_t>(label)) return std::get<std::int64_t>(label);
  if (std::holds_alternative<double>(label)) return num(std::get<double>(label));
  return complex_pair(std::get<Complex>(label));
}

Json to_json(const OutcomeGrid& grid) {
  Json j;
  j["schema"] = "qmeas/1";
  j["type"] = "grid";
  switch (grid.kind) {
    case GridKind::discrete: j["kind"] = "discrete"; break;
    case GridKind::line: j["kind"] = "line"; break;
    case GridKind::plane: j["kind"] = "plane"; break;
  }
  Json labels = Json::array();
  for (const Label& l : grid.labels) labels.push_back(to_json(l));
  j["labels"] = std::move(labels);
  Json weights = Json::array();
  for (Eigen::Index i = 0; i < grid.weights.size(); ++i) weights.push_back(num(grid.weights[i]));
  j["weights"] = std::move(weights);
  return j;
}

Json to_json(const Distribution& dist) {
  Json j;
  j["schema"] = "qmeas/1";
  j["type"] = "distribution";
  j["grid"] = to_json(dist.grid);
  Json density = Json::array();
  for (Eigen::Index i = 0; i < dist.density.size(); ++i) density.push_back(num(dist.density[i]));
  j["density"] = std::move(density);
  j["mass"] = num(dist.mass());
  return j;
}

Json to_json(const Operator& op) {
  Json j;
  j["schema"] = "qmeas/1";
  j["type"] = "operator";
  j["rows"] = op.rows();
  j["cols"] = op.cols();
  j["data"] = complex_matrix(op);
  return j;
}

Json to_json(const ConservationReport& report, std::size_t max_rows) {
  Json j;
  j["schema"] = "qmeas-report/1";
  j["type"] = "conservation";
  j["lhs_nats"] = num(report.lhs);
  j["d_pre_nats"] = num(report.d_pre);
  j["d_post_avg_nats"] = num(report.d_post_avg);
  j["residual_nats"] = num(report.residual);
  j["joint_residual_nats"] = num(report.joint_residual);
  j["finite"] = report.finite;
  Json rows = Json::array();
  std::size_t count = report.per_outcome.size();
  if (max_rows > 0 && count > max_rows) count = max_rows;
  for (std::size_t i = 0; i < count; ++i) {
    const PerOutcomeRow& row = report.per_outcome[i];
    Json r;
    r["y"] = to_json(row.y);
    r["p_y"] = num(row.p_y);
    r["d_cond_nats"] = num(row.d_cond);
    rows.push_back(std::move(r));
  }
  j["per_outcome"] = std::move(rows);
  j["per_outcome_total"] = report.per_outcome.size();
  return j;
}

Json to_json(const ShannonBalance& balance) {
  Json j;
  j["schema"] = "qmeas-report/1";
  j["type"] = "shannon-balance";
  j["h_pre_nats"] = num(balance.h_pre);
  j["h_post_avg_nats"] = num(balance.h_post_avg);
  j["mutual_info_nats"] = num(balance.mutual_info);
  j["deficit_nats"] = num(balance.deficit);
  j["finite"] = balance.finite;
  return j;
}

Json to_json(const ClassicalityCertificate& cert, std::size_t max_table) {
  Json j;
  j["schema"] = "qmeas-cert/1";
  j["mode"] = cert.mode;
  j["residual_sufficient"] = num(cert.residual_sufficient);
  j["residual_coarse"] = num(cert.residual_coarse);
  j["residual_pushforward"] = num(cert.residual_pushforward);
  j["ban_satisfied"] = cert.ban_satisfied;
  j["ban_deviation"] = num(cert.ban_deviation);
  j["tolerance_used"] = num(cert.tol_used);
  j["y_reach_used"] = num(cert.y_reach_used);
  j["sampled_x_nodes"] = cert.x_nodes.size();
  j["sampled_y_nodes"] = cert.y_nodes.size();
  bool small = cert.x_nodes.size() <= max_table && cert.y_nodes.size() <= max_table;
  if (small && cert.q.size() > 0) {
    j["x_nodes"] = cert.x_nodes;
    j["y_nodes"] = cert.y_nodes;
    j["q"] = real_matrix(cert.q);
    j["x_tilde"] = complex_matrix(cert.x_tilde);
    j["kernel"] = real_matrix(cert.kernel);
  } else {
    j["tables_omitted"] = true;
  }
  return j;
}

std::string csv_escape(const std::string& field) {
  bool needs_quote = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quote) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace qmeas
