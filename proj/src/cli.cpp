#include "qmeas/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "qmeas/config.hpp"
#include "qmeas/entropy.hpp"
#include "qmeas/serialize.hpp"

namespace qmeas {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

int thread_budget() {
  if (const char* env = std::getenv("QMEAS_THREADS")) {
    long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<int>(n);
  }
  return 1;
}

struct PairOutcome {
  std::string pair_text;
  ConservationReport report;
  ShannonBalance shannon;
  bool have_shannon = false;
  bool conservation_ok = false;
  bool deficit_ok = true;
  bool deficit_checked = false;
};

struct BundleOutcome {
  std::string name;
  ClassicalityCertificate cert;
  double cert_residual = 0;
  double conservation_tol = 0;
  double cert_tol = 0;
  bool expected_ban = true;
  bool certificate_ok = false;
  bool ban_ok = false;
  std::vector<PairOutcome> pairs;
};

struct PointOutcome {
  double param_value = 0;
  bool has_param = false;
  std::vector<BundleOutcome> bundles;
};

double config_tol(const RunConfig& config, const std::string& name, double fallback) {
  auto it = config.tolerances.find(name);
  return it == config.tolerances.end() ? fallback : it->second;
}

bool config_expect(const RunConfig& config, const std::string& name, bool fallback) {
  auto it = config.expect_bool.find(name);
  return it == config.expect_bool.end() ? fallback : it->second;
}

PointOutcome run_point(const RunConfig& config, bool has_param, double value) {
  std::map<std::string, double> overrides;
  if (has_param) overrides[config.sweep_param] = value;

  PointOutcome point;
  point.has_param = has_param;
  point.param_value = value;

  for (ModelBundle& bundle : build_model(config, overrides)) {
    BundleOutcome out;
    out.name = bundle.name;
    out.conservation_tol = config_tol(config, "conservation", bundle.conservation_tol);
    out.cert_tol = config_tol(config, "certificate", bundle.cert_tol);
    out.expected_ban = config_expect(config, "ban", bundle.expect_ban);

    out.cert = certify(bundle);
    out.cert_residual = std::max({out.cert.residual_sufficient, out.cert.residual_coarse,
                                  out.cert.residual_pushforward});
    bool cert_within = out.cert_residual <= out.cert_tol;
    out.certificate_ok = cert_within == config_expect(config, "certificate", true);
    out.ban_ok = out.cert.ban_satisfied == out.expected_ban;

    ReportOptions opts = bundle_options(bundle);
    opts.norm_tol = config_tol(config, "norm", bundle.norm_tol);

    for (const StatePair& pair : config.pairs) {
      PairOutcome po;
      po.pair_text = pair.rho + " | " + pair.sigma;
      Operator rho = make_state(pair.rho, bundle.space);
      Operator sigma = make_state(pair.sigma, bundle.space);
      po.report = conservation_report(rho, sigma, bundle.inst, bundle.povmX, opts);
      bool within = po.report.finite && po.report.residual <= out.conservation_tol;
      po.conservation_ok = within == config_expect(config, "conservation", true);
      if (bundle.analytic) {
        po.shannon = shannon_balance(rho, bundle.inst, bundle.povmX,
                                     bundle.analytic->p_y_given_x, opts);
        po.have_shannon = true;
        if (auto it = config.expect_num.find("deficit"); it != config.expect_num.end()) {
          double tol_d = config_tol(config, "deficit", 5e-2);
          po.deficit_checked = true;
          po.deficit_ok = po.shannon.finite && std::abs(po.shannon.deficit - it->second) <= tol_d;
        }
      }
      out.pairs.push_back(std::move(po));
    }
    point.bundles.push_back(std::move(out));
  }
  return point;
}

std::vector<PointOutcome> run_all_points(const RunConfig& config,
                                         const std::vector<double>& values, bool has_param) {
  std::size_t n = has_param ? values.size() : 1;
  std::vector<PointOutcome> points(n);
  int threads = thread_budget();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      points[i] = run_point(config, has_param, has_param ? values[i] : 0.0);
    return points;
  }
  // Bounded fan-out; results land in config order regardless of completion
  // order, so parallel runs stay byte-identical to serial ones.
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(threads)) {
    std::size_t stop = std::min(n, start + static_cast<std::size_t>(threads));
    std::vector<std::future<PointOutcome>> batch;
    for (std::size_t i = start; i < stop; ++i) {
      batch.push_back(std::async(std::launch::async, [&config, &values, has_param, i] {
        return run_point(config, has_param, has_param ? values[i] : 0.0);
      }));
    }
    for (std::size_t i = start; i < stop; ++i) points[i] = batch[i - start].get();
  }
  return points;
}

std::string csv_bool(bool b) { return b ? "true" : "false"; }

std::string render_csv(const RunConfig& config, const std::vector<PointOutcome>& points) {
  std::ostringstream out;
  out << "model,param_name,param_value,state_pair,lhs_nats,d_pre_nats,d_post_avg_nats,"
         "residual_nats,shannon_deficit_nats,ban_ok,cert_residual\n";
  for (const PointOutcome& point : points) {
    std::string pname = point.has_param ? config.sweep_param : "-";
    std::string pvalue = point.has_param ? fmt(point.param_value) : "";
    for (const BundleOutcome& bundle : point.bundles) {
      for (const PairOutcome& pair : bundle.pairs) {
        out << csv_escape(bundle.name) << ',' << csv_escape(pname) << ',' << pvalue << ','
            << csv_escape(pair.pair_text) << ',' << fmt(pair.report.lhs) << ','
            << fmt(pair.report.d_pre) << ',' << fmt(pair.report.d_post_avg) << ','
            << fmt(pair.report.residual) << ','
            << (pair.have_shannon ? fmt(pair.shannon.deficit) : std::string("")) << ','
            << csv_bool(bundle.cert.ban_satisfied) << ',' << fmt(bundle.cert_residual) << '\n';
      }
    }
  }
  return out.str();
}

Json render_json(const RunConfig& config, const std::vector<PointOutcome>& points, bool pass,
                 const std::vector<std::string>& failures) {
  Json doc;
  doc["schema"] = "qmeas/1";
  doc["type"] = "verify-run";
  doc["model"] = config.model;
  Json jpoints = Json::array();
  for (const PointOutcome& point : points) {
    Json jp;
    if (point.has_param) {
      jp["param_name"] = config.sweep_param;
      jp["param_value"] = point.param_value;
    } else {
      jp["param_name"] = nullptr;
      jp["param_value"] = nullptr;
    }
    Json jbundles = Json::array();
    for (const BundleOutcome& bundle : point.bundles) {
      Json jb;
      jb["model"] = bundle.name;
      jb["conservation_tol"] = bundle.conservation_tol;
      jb["certificate_tol"] = bundle.cert_tol;
      jb["expected_ban"] = bundle.expected_ban;
      jb["certificate"] = to_json(bundle.cert, 64);
      jb["certificate_ok"] = bundle.certificate_ok;
      jb["ban_ok"] = bundle.ban_ok;
      Json jpairs = Json::array();
      for (const PairOutcome& pair : bundle.pairs) {
        Json jr;
        jr["state_pair"] = pair.pair_text;
        jr["conservation"] = to_json(pair.report, 256);
        if (pair.have_shannon) jr["shannon"] = to_json(pair.shannon);
        jr["conservation_ok"] = pair.conservation_ok;
        if (pair.deficit_checked) jr["deficit_ok"] = pair.deficit_ok;
        jpairs.push_back(std::move(jr));
      }
      jb["pairs"] = std::move(jpairs);
      jbundles.push_back(std::move(jb));
    }
    jp["bundles"] = std::move(jbundles);
    jpoints.push_back(std::move(jp));
  }
  doc["points"] = std::move(jpoints);
  doc["pass"] = pass;
  doc["failures"] = failures;
  return doc;
}

bool evaluate(const RunConfig& config, const std::vector<PointOutcome>& points,
              std::vector<std::string>& failures) {
  for (const PointOutcome& point : points) {
    std::string at =
        point.has_param ? " at " + config.sweep_param + "=" + fmt(point.param_value) : "";
    for (const BundleOutcome& bundle : point.bundles) {
      if (!bundle.certificate_ok)
        failures.push_back(bundle.name + at + ": certificate residual " +
                           fmt(bundle.cert_residual) + " vs tolerance " + fmt(bundle.cert_tol));
      if (!bundle.ban_ok)
        failures.push_back(bundle.name + at + ": Ban check " +
                           std::string(bundle.cert.ban_satisfied ? "holds" : "fails") +
                           " but expected " + (bundle.expected_ban ? "holds" : "fails"));
      for (const PairOutcome& pair : bundle.pairs) {
        if (!pair.conservation_ok)
          failures.push_back(bundle.name + at + " [" + pair.pair_text +
                             "]: conservation residual " + fmt(pair.report.residual) +
                             " vs tolerance " + fmt(bundle.conservation_tol) +
                             (pair.report.finite ? "" : " (not finite)"));
        if (pair.deficit_checked && !pair.deficit_ok)
          failures.push_back(bundle.name + at + " [" + pair.pair_text + "]: deficit " +
                             fmt(pair.shannon.deficit) + " vs expected " +
                             fmt(config.expect_num.at("deficit")));
      }
    }
  }
  return failures.empty();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write output file '" + path + "'");
  out << text;
}

int cmd_verify(const std::string& config_path, const std::string& output_override) {
  RunConfig config = load_run_config(config_path);
  if (!output_override.empty()) config.output_path = output_override;
  bool has_param = !config.sweep_param.empty();
  std::vector<PointOutcome> points = run_all_points(config, config.sweep_values, has_param);
  std::vector<std::string> failures;
  bool pass = evaluate(config, points, failures);
  std::string text = config.output_format == "csv"
                         ? render_csv(config, points)
                         : render_json(config, points, pass, failures).dump(2) + "\n";
  write_output(config.output_path, text);
  for (const std::string& f : failures) std::cerr << "FAIL " << f << "\n";
  std::cerr << (pass ? "verify: all checks passed\n" : "verify: checks failed\n");
  return pass ? exit_ok : exit_condition_failed;
}

int cmd_sweep(const std::string& config_path, const std::string& output_override) {
  RunConfig config = load_run_config(config_path);
  if (config.sweep_param.empty())
    throw ConfigError("sweep requires a [sweep] section with 'param' and 'values'");
  if (!output_override.empty()) config.output_path = output_override;
  std::vector<PointOutcome> points = run_all_points(config, config.sweep_values, true);
  std::vector<std::string> failures;
  bool pass = evaluate(config, points, failures);
  write_output(config.output_path, render_csv(config, points));
  for (const std::string& f : failures) std::cerr << "FAIL " << f << "\n";
  std::cerr << (pass ? "sweep: all checks passed\n" : "sweep: checks failed\n");
  return pass ? exit_ok : exit_condition_failed;
}

int cmd_selftest(const std::string& fault) {
  std::vector<SelftestEntry> entries = run_selftest_battery(fault);
  bool all_pass = true;
  for (const SelftestEntry& e : entries) {
    std::printf("[%s] %-38s %.6e  %s\n", e.pass ? "PASS" : "FAIL", e.name.c_str(), e.metric,
                e.detail.c_str());
    all_pass = all_pass && e.pass;
  }
  std::printf("selftest: %s (%zu checks)\n", all_pass ? "PASS" : "FAIL", entries.size());
  return all_pass ? exit_ok : exit_internal;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"qmeas: conservation-law and classicality verification for quantum measurements"};
  app.require_subcommand(1);

  std::string config_path, output_path, fault;

  CLI::App* verify = app.add_subcommand("verify", "run conservation and certificate checks");
  verify->add_option("-c,--config", config_path, "TOML run configuration")->required();
  verify->add_option("-o,--output", output_path, "output path (overrides [output].path)");

  CLI::App* sweep = app.add_subcommand("sweep", "parameter sweep, one CSV row per point");
  sweep->add_option("-c,--config", config_path, "TOML run configuration")->required();
  sweep->add_option("-o,--output", output_path, "output CSV path (overrides [output].path)");

  CLI::App* selftest = app.add_subcommand("selftest", "run the built-in invariant battery");
  selftest->add_option("--fault", fault, "inject a named defect (test hook)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (verify->parsed()) return cmd_verify(config_path, output_path);
    if (sweep->parsed()) return cmd_sweep(config_path, output_path);
    return cmd_selftest(fault);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_internal;
  }
}

}  // namespace qmeas
