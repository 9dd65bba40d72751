// Command-line pipeline: simulate -> fit -> dynamics -> pace -> report,
// with file handoffs between stages so each stage can be rerun in isolation.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "empdyn/dataset.hpp"
#include "empdyn/errors.hpp"
#include "empdyn/io.hpp"
#include "empdyn/pipeline.hpp"
#include "empdyn/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace empdyn;

namespace {

struct CommonOpts {
  std::string input;
  std::string output_dir = ".";
  int grid_size = 101;
  std::string bandwidths = "auto";
  double fve = 0.95;
  int k_max = 20;
  double r2_threshold = 0.9;
  bool log_values = false;
  std::string domain;  // "a,b"
  std::string kernel = "epanechnikov";
  std::uint64_t seed = 0;
  int top = 3;
};

std::optional<Interval> parse_domain(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto pos = s.find(',');
  if (pos == std::string::npos) throw config_error("--domain expects a,b");
  try {
    Interval iv{std::stod(s.substr(0, pos)), std::stod(s.substr(pos + 1))};
    if (!(iv.b > iv.a)) throw config_error("--domain needs a < b");
    return iv;
  } catch (const std::invalid_argument&) {
    throw config_error("--domain expects numeric a,b");
  }
}

KernelSpec parse_kernel(const std::string& s) {
  if (s == "epanechnikov") return {KernelFamily::Epanechnikov};
  if (s == "gaussian-truncated") return {KernelFamily::GaussianTruncated};
  throw config_error("unknown kernel: " + s);
}

RunConfig make_run_config(const CommonOpts& o) {
  RunConfig cfg;
  cfg.grid_size = o.grid_size;
  cfg.fve = o.fve;
  cfg.k_max = o.k_max;
  cfg.r2_threshold = o.r2_threshold;
  cfg.top_extremes = o.top;
  cfg.seed = o.seed;
  cfg.smooth.kernel = parse_kernel(o.kernel);
  if (o.bandwidths == "auto") {
    cfg.auto_bandwidths = true;
  } else {
    cfg.auto_bandwidths = false;
    double h[4];
    if (std::sscanf(o.bandwidths.c_str(), "%lf,%lf,%lf,%lf", &h[0], &h[1], &h[2], &h[3]) != 4)
      throw config_error("--bandwidths expects 'auto' or h_mu0,h_mu1,h_cov0,h_cov1");
    cfg.smooth.h_mu0 = h[0];
    cfg.smooth.h_mu1 = h[1];
    cfg.smooth.h_cov0 = h[2];
    cfg.smooth.h_cov1 = h[3];
  }
  cfg.validate();
  return cfg;
}

std::string canonical_config(const std::string& cmd, const CommonOpts& o) {
  std::string s = cmd + ";in=" + o.input + ";grid=" + std::to_string(o.grid_size) +
                  ";bw=" + o.bandwidths + ";fve=" + format_double(o.fve) +
                  ";kmax=" + std::to_string(o.k_max) +
                  ";r2=" + format_double(o.r2_threshold) +
                  ";log=" + (o.log_values ? "1" : "0") + ";dom=" + o.domain +
                  ";kern=" + o.kernel + ";seed=" + std::to_string(o.seed) +
                  ";top=" + std::to_string(o.top);
  return s;
}

json meta_json(const std::string& hash, std::uint64_t seed) {
  return json{{"version", kVersion}, {"config", hash}, {"seed", seed}};
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot open output file: " + path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open input file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
}

TruthSpec truth_spec_from_json(const json& j) {
  TruthSpec spec;
  try {
    if (j.contains("mu")) {
      const auto& m = j.at("mu");
      if (m.contains("poly")) spec.mu.poly = m.at("poly").get<std::vector<double>>();
      if (m.contains("cos")) spec.mu.cos_coeffs = m.at("cos").get<std::vector<double>>();
    }
    spec.lambdas = j.at("lambdas").get<std::vector<double>>();
    spec.sigma2 = j.value("sigma2", 0.0);
    if (j.contains("domain")) {
      spec.domain.a = j.at("domain").at(0).get<double>();
      spec.domain.b = j.at("domain").at(1).get<double>();
    }
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      const std::string kind = s.value("kind", "sparse");
      if (kind == "dense") {
        spec.sampling.kind = SamplingSpec::Kind::Dense;
        spec.sampling.m_obs = s.value("m_obs", 51);
      } else if (kind == "sparse") {
        spec.sampling.kind = SamplingSpec::Kind::Sparse;
        spec.sampling.n_min = s.value("n_min", 2);
        spec.sampling.n_max = s.value("n_max", 8);
      } else {
        throw config_error("unknown sampling kind: " + kind);
      }
    }
    spec.seed = j.value("seed", 0ull);
  } catch (const json::exception& e) {
    throw config_error(std::string("truth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

json truth_spec_to_json(const TruthSpec& spec) {
  json j;
  j["mu"] = {{"poly", spec.mu.poly}, {"cos", spec.mu.cos_coeffs}};
  j["lambdas"] = spec.lambdas;
  j["sigma2"] = spec.sigma2;
  j["domain"] = {spec.domain.a, spec.domain.b};
  if (spec.sampling.kind == SamplingSpec::Kind::Dense)
    j["sampling"] = {{"kind", "dense"}, {"m_obs", spec.sampling.m_obs}};
  else
    j["sampling"] = {{"kind", "sparse"}, {"n_min", spec.sampling.n_min}, {"n_max", spec.sampling.n_max}};
  j["seed"] = spec.seed;
  return j;
}

// ---- subcommand bodies ----

int cmd_simulate(const CommonOpts& o, const std::string& spec_path, int n,
                 bool seed_given) {
  if (n < 1) throw config_error("--n must be >= 1");
  TruthSpec spec = truth_spec_from_json(read_json(spec_path));
  if (seed_given) spec.seed = o.seed;
  const std::string hash =
      config_hash_hex("simulate;" + spec_path + ";n=" + std::to_string(n) + ";" +
                      truth_spec_to_json(spec).dump());
  const std::string meta = meta_line(hash, spec.seed);

  SimulatedSample sample = sample_dataset(spec, n);
  fs::create_directories(o.output_dir);
  write_csv(sample.data, o.output_dir + "/data.csv", meta);

  json truth;
  truth["meta"] = meta_json(hash, spec.seed);
  truth["spec"] = truth_spec_to_json(spec);
  truth["n"] = n;
  std::vector<std::vector<double>> xi(sample.xi.rows());
  for (Eigen::Index i = 0; i < sample.xi.rows(); ++i) {
    xi[i].resize(sample.xi.cols());
    for (Eigen::Index k = 0; k < sample.xi.cols(); ++k) xi[i][k] = sample.xi(i, k);
  }
  truth["xi"] = xi;
  write_json(o.output_dir + "/truth.json", truth);
  std::cout << "wrote " << o.output_dir << "/data.csv (" << sample.data.n_subjects()
            << " subjects, " << sample.data.total_obs() << " observations)\n";
  return 0;
}

int cmd_fit(const CommonOpts& o) {
  if (o.input.empty()) throw config_error("fit requires --input");
  const RunConfig cfg = make_run_config(o);
  const std::string hash = config_hash_hex(canonical_config("fit", o));
  const std::string meta = meta_line(hash, o.seed);

  LoadStats stats;
  SparseDataset data = load_csv(o.input, parse_domain(o.domain), &stats, o.log_values);
  FitResult fit = run_fit(data, cfg);

  fs::create_directories(o.output_dir);
  write_columns_csv(o.output_dir + "/moments.csv", meta, {"t", "mu", "dmu"},
                    {&fit.grid.t, &fit.moments.mu, &fit.moments.dmu});
  write_matrix_csv(o.output_dir + "/cov.csv", meta, fit.moments.cov);
  write_matrix_csv(o.output_dir + "/dcov.csv", meta, fit.moments.dcov);

  std::vector<std::string> names{"t"};
  std::vector<const Eigen::VectorXd*> cols{&fit.grid.t};
  std::vector<Eigen::VectorXd> store;
  store.reserve(2 * fit.eig.K);
  for (int k = 0; k < fit.eig.K; ++k) store.push_back(fit.eig.phi.col(k));
  for (int k = 0; k < fit.eig.K; ++k) store.push_back(fit.eig.dphi.col(k));
  for (int k = 0; k < fit.eig.K; ++k) {
    names.push_back("phi_" + std::to_string(k + 1));
    cols.push_back(&store[k]);
  }
  for (int k = 0; k < fit.eig.K; ++k) {
    names.push_back("dphi_" + std::to_string(k + 1));
    cols.push_back(&store[fit.eig.K + k]);
  }
  write_columns_csv(o.output_dir + "/eigensystem.csv", meta, names, cols);

  json summary;
  summary["meta"] = meta_json(hash, o.seed);
  summary["sigma2"] = fit.moments.sigma2;
  summary["bandwidths"] = {{"h_mu0", fit.bandwidths.h_mu0},
                           {"h_mu1", fit.bandwidths.h_mu1},
                           {"h_cov0", fit.bandwidths.h_cov0},
                           {"h_cov1", fit.bandwidths.h_cov1},
                           {"mode", cfg.auto_bandwidths ? "auto" : "fixed"},
                           {"kernel", o.kernel}};
  summary["lambda"] = std::vector<double>(fit.eig.lambda.data(),
                                          fit.eig.lambda.data() + fit.eig.K);
  summary["fve"] = std::vector<double>(fit.eig.fve.data(), fit.eig.fve.data() + fit.eig.K);
  {
    // consecutive eigenvalue spacings, diagnostic only
    std::vector<double> gaps;
    for (int k = 0; k + 1 < fit.eig.K; ++k)
      gaps.push_back(fit.eig.lambda(k) - fit.eig.lambda(k + 1));
    summary["lambda_gaps"] = gaps;
  }
  summary["K"] = fit.eig.K;
  summary["total_variance"] = fit.eig.total_variance;
  summary["grid_size"] = cfg.grid_size;
  summary["domain"] = {data.domain.a, data.domain.b};
  summary["n_subjects"] = data.n_subjects();
  summary["n_obs"] = data.total_obs();
  summary["rows_dropped_outside_domain"] = stats.rows_dropped_outside_domain;
  summary["widen_events"] = fit.log.widen_events;
  summary["max_widened_bandwidth"] = fit.log.max_widened_bandwidth;
  summary["clamp_events"] = fit.log.clamp_events;
  summary["warnings"] = fit.log.notes;
  write_json(o.output_dir + "/summary.json", summary);
  std::cout << "fit: K=" << fit.eig.K << " sigma2=" << fit.moments.sigma2 << "\n";
  return 0;
}

EigenSystem read_eigensystem(const std::string& dir) {
  const json summary = read_json(dir + "/summary.json");
  CsvTable table = read_columns_csv(dir + "/eigensystem.csv");
  EigenSystem eig;
  const int k = summary.at("K").get<int>();
  Interval dom{summary.at("domain").at(0).get<double>(),
               summary.at("domain").at(1).get<double>()};
  const int m = static_cast<int>(table.cols.rows());
  eig.grid = make_grid(dom, m);
  eig.K = k;
  eig.total_variance = summary.at("total_variance").get<double>();
  const auto lambda = summary.at("lambda").get<std::vector<double>>();
  const auto fve = summary.at("fve").get<std::vector<double>>();
  eig.lambda = Eigen::Map<const Eigen::VectorXd>(lambda.data(), k);
  eig.fve = Eigen::Map<const Eigen::VectorXd>(fve.data(), k);
  eig.phi.resize(m, k);
  eig.dphi.resize(m, k);
  for (int c = 0; c < k; ++c) {
    eig.phi.col(c) = table.column("phi_" + std::to_string(c + 1));
    eig.dphi.col(c) = table.column("dphi_" + std::to_string(c + 1));
  }
  return eig;
}

int cmd_dynamics(const CommonOpts& o) {
  const std::string hash = config_hash_hex(canonical_config("dynamics", o));
  const std::string meta = meta_line(hash, o.seed);
  EigenSystem eig = read_eigensystem(o.output_dir);

  RunLog log;
  DynamicsEstimate dyn =
      assemble_dynamics(eig, TruncationRule{o.fve, o.k_max}, 1e-6, &log);

  write_columns_csv(o.output_dir + "/dynamics.csv", meta,
                    {"t", "beta", "varX", "varDX", "V", "R2"},
                    {&dyn.grid.t, &dyn.beta, &dyn.var_x, &dyn.var_dx, &dyn.var_z, &dyn.r2});
  write_matrix_csv(o.output_dir + "/gz.csv", meta, dyn.cov_z);

  std::vector<std::string> names{"t"};
  std::vector<const Eigen::VectorXd*> cols{&dyn.grid.t};
  std::vector<Eigen::VectorXd> store;
  store.reserve(dyn.drift.K);
  for (int k = 0; k < dyn.drift.K; ++k) store.push_back(dyn.drift.phi.col(k));
  for (int k = 0; k < dyn.drift.K; ++k) {
    names.push_back("psi_" + std::to_string(k + 1));
    cols.push_back(&store[k]);
  }
  write_columns_csv(o.output_dir + "/drift_eig.csv", meta, names, cols);

  json out;
  out["meta"] = meta_json(hash, o.seed);
  out["K"] = eig.K;
  out["fve"] = std::vector<double>(eig.fve.data(), eig.fve.data() + eig.K);
  out["rho"] = std::vector<double>(dyn.drift.lambda.data(),
                                   dyn.drift.lambda.data() + dyn.drift.K);
  out["floor_events_x"] = dyn.floor_events_x;
  out["floor_events_dx"] = dyn.floor_events_dx;
  out["r2_clip_events"] = dyn.clip_events_r2;
  out["r2_threshold"] = o.r2_threshold;
  json intervals = json::array();
  for (const auto& iv : subdomain_report(dyn, o.r2_threshold))
    intervals.push_back({{"lo", iv.lo}, {"hi", iv.hi}, {"regime", iv.regime}});
  out["subdomains"] = intervals;
  out["warnings"] = log.notes;
  write_json(o.output_dir + "/subdomains.json", out);
  std::cout << "dynamics: drift components=" << dyn.drift.K << "\n";
  return 0;
}

int cmd_pace(const CommonOpts& o) {
  if (o.input.empty()) throw config_error("pace requires --input");
  const std::string hash = config_hash_hex(canonical_config("pace", o));
  const std::string meta = meta_line(hash, o.seed);

  SparseDataset data = load_csv(o.input, parse_domain(o.domain), nullptr, o.log_values);
  const json summary = read_json(o.output_dir + "/summary.json");
  EigenSystem eig = read_eigensystem(o.output_dir);

  MomentEstimates moments;
  moments.grid = eig.grid;
  CsvTable mom = read_columns_csv(o.output_dir + "/moments.csv");
  moments.mu = mom.column("mu");
  moments.dmu = mom.column("dmu");
  moments.cov = read_matrix_csv(o.output_dir + "/cov.csv");
  moments.sigma2 = summary.at("sigma2").get<double>();

  CsvTable dyn_table = read_columns_csv(o.output_dir + "/dynamics.csv");
  DynamicsEstimate dyn;
  dyn.grid = eig.grid;
  dyn.beta = dyn_table.column("beta");
  dyn.var_x = dyn_table.column("varX");
  dyn.var_dx = dyn_table.column("varDX");
  dyn.var_z = dyn_table.column("V");
  dyn.r2 = dyn_table.column("R2");

  // drift eigenpairs for the score projections
  const json subdomains = read_json(o.output_dir + "/subdomains.json");
  const auto rho = subdomains.at("rho").get<std::vector<double>>();
  CsvTable drift_table = read_columns_csv(o.output_dir + "/drift_eig.csv");
  dyn.drift.grid = eig.grid;
  dyn.drift.K = static_cast<int>(rho.size());
  if (dyn.drift.K > 0) {
    dyn.drift.lambda = Eigen::Map<const Eigen::VectorXd>(rho.data(), dyn.drift.K);
    dyn.drift.phi.resize(eig.grid.size(), dyn.drift.K);
    for (int k = 0; k < dyn.drift.K; ++k)
      dyn.drift.phi.col(k) = drift_table.column("psi_" + std::to_string(k + 1));
  }

  RunConfig cfg;
  cfg.top_extremes = o.top;
  PaceOutcome outcome = run_pace(data, moments, eig, dyn, cfg);

  fs::create_directories(o.output_dir + "/subjects");
  for (const auto& fit : outcome.fits) {
    std::ofstream out(o.output_dir + "/subjects/" + fit.id + ".csv");
    if (!out) throw config_error("cannot write subject file for " + fit.id);
    out << "# " << meta << "\n";
    out << "subject_id,t,xhat,dxhat,zhat\n";
    for (int i = 0; i < eig.grid.size(); ++i)
      out << fit.id << ',' << format_double(eig.grid.t(i)) << ','
          << format_double(fit.xhat(i)) << ',' << format_double(fit.dxhat(i)) << ','
          << format_double(fit.zhat(i)) << '\n';
  }

  json scores;
  scores["meta"] = meta_json(hash, o.seed);
  json subj = json::array();
  for (const auto& fit : outcome.fits) {
    json rec;
    rec["id"] = fit.id;
    rec["scores"] = std::vector<double>(fit.scores.data(),
                                        fit.scores.data() + fit.scores.size());
    subj.push_back(rec);
  }
  scores["subjects"] = subj;
  scores["failed"] = outcome.failed_subjects;
  write_json(o.output_dir + "/scores.json", scores);

  json extremes;
  extremes["meta"] = meta_json(hash, o.seed);
  extremes["top"] = o.top;
  json comps = json::array();
  for (const auto& comp : outcome.extremes) {
    json lst = json::array();
    for (const auto& e : comp) lst.push_back({{"id", e.id}, {"score", e.score}});
    comps.push_back(lst);
  }
  extremes["components"] = comps;
  write_json(o.output_dir + "/extremes.json", extremes);

  for (const auto& id : outcome.failed_subjects)
    std::cerr << "warning: conditional fit failed for subject " << id << "\n";
  std::cout << "pace: fitted " << outcome.fits.size() << " subjects\n";
  return 0;
}

int cmd_report(const CommonOpts& o) {
  const std::string hash = config_hash_hex(canonical_config("report", o));
  json report;
  report["meta"] = meta_json(hash, o.seed);
  for (const char* part : {"summary", "subdomains", "extremes"}) {
    const std::string path = o.output_dir + "/" + part + ".json";
    if (fs::exists(path)) report[part] = read_json(path);
  }
  write_json(o.output_dir + "/report.json", report);
  std::cout << "wrote " << o.output_dir << "/report.json\n";
  return 0;
}

void add_common(CLI::App* cmd, CommonOpts& o, bool with_fit_opts) {
  cmd->add_option("--output-dir", o.output_dir, "Directory for stage outputs");
  cmd->add_option("--seed", o.seed, "Seed recorded in output headers");
  if (with_fit_opts) {
    cmd->add_option("--grid-size", o.grid_size, "Evaluation grid size");
    cmd->add_option("--bandwidths", o.bandwidths,
                    "'auto' or h_mu0,h_mu1,h_cov0,h_cov1");
    cmd->add_option("--fve", o.fve, "Fraction-of-variance threshold");
    cmd->add_option("--kmax", o.k_max, "Maximum number of components");
    cmd->add_option("--kernel", o.kernel, "epanechnikov or gaussian-truncated");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical dynamic equation estimation for sparse longitudinal data"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string spec_path;
  int n_subjects = 0;

  auto* sim = app.add_subcommand("simulate", "Generate a dataset from a truth spec");
  sim->add_option("--spec", spec_path, "Truth spec JSON")->required();
  sim->add_option("--n", n_subjects, "Number of subjects")->required();
  add_common(sim, o, false);

  auto* fit = app.add_subcommand("fit", "Smooth moments and decompose the covariance");
  fit->add_option("--input", o.input, "Dataset CSV")->required();
  fit->add_option("--domain", o.domain, "Restrict to a,b");
  fit->add_flag("--log-values", o.log_values, "Log-transform values at ingestion");
  add_common(fit, o, true);

  auto* dyn = app.add_subcommand("dynamics", "Assemble the dynamic equation components");
  dyn->add_option("--r2-threshold", o.r2_threshold, "Subdomain report threshold");
  add_common(dyn, o, true);

  auto* pace = app.add_subcommand("pace", "Per-subject conditional trajectories");
  pace->add_option("--input", o.input, "Dataset CSV")->required();
  pace->add_option("--domain", o.domain, "Restrict to a,b");
  pace->add_flag("--log-values", o.log_values, "Log-transform values at ingestion");
  pace->add_option("--top", o.top, "Extreme subjects per drift component");
  add_common(pace, o, false);

  auto* rep = app.add_subcommand("report", "Bundle stage summaries into one JSON");
  add_common(rep, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, spec_path, n_subjects, sim->count("--seed") > 0);
    if (fit->parsed()) return cmd_fit(o);
    if (dyn->parsed()) return cmd_dynamics(o);
    if (pace->parsed()) return cmd_pace(o);
    if (rep->parsed()) return cmd_report(o);
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const estimation_error& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
