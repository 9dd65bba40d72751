#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "empdyn/errors.hpp"
#include "empdyn/rng.hpp"
#include "empdyn/simulate.hpp"
#include "empdyn/smoothing.hpp"

using namespace empdyn;

namespace {

SmoothConfig fixed_cfg(double h_mu, double h_cov) {
  SmoothConfig cfg;
  cfg.h_mu0 = h_mu;
  cfg.h_mu1 = 1.5 * h_mu;
  cfg.h_cov0 = h_cov;
  cfg.h_cov1 = 1.5 * h_cov;
  return cfg;
}

// subjects with uniform random times and values given by f
SparseDataset function_dataset(int n, int n_obs, double (*f)(double), std::uint64_t seed) {
  SparseDataset data;
  data.domain = {0.0, 1.0};
  for (int i = 0; i < n; ++i) {
    CounterRng rng(seed, i);
    SubjectRecord rec;
    rec.id = "f" + std::to_string(i);
    rec.times.resize(n_obs);
    for (int j = 0; j < n_obs; ++j) rec.times[j] = rng.next_uniform();
    std::sort(rec.times.begin(), rec.times.end());
    rec.values.resize(n_obs);
    for (int j = 0; j < n_obs; ++j) rec.values[j] = f(rec.times[j]);
    data.subjects.push_back(std::move(rec));
  }
  data.validate();
  return data;
}

}  // namespace

TEST_CASE("kernels are densities of the required order") {
  // Simpson quadrature over the support
  for (auto fam : {KernelFamily::Epanechnikov, KernelFamily::GaussianTruncated}) {
    KernelSpec k{fam};
    const double r = k.support();
    const int n = 4000;
    const double h = 2.0 * r / n;
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double u = -r + h * i;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      m0 += w * k(u);
      m1 += w * u * k(u);
      m2 += w * u * u * k(u);
    }
    m0 *= h / 3.0;
    m1 *= h / 3.0;
    m2 *= h / 3.0;
    // the support-edge value does not affect the integral; quadrature sees
    // half the edge jump, hence the 1e-5 slack
    CHECK(m0 == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::abs(m1) < 1e-12);
    CHECK(m2 > 0.01);
    CHECK(k(r + 1e-9) == 0.0);  // compact support
    CHECK(k(0.0) > 0.0);
  }
}

TEST_CASE("constant data reproduces the constant and kills the derivative") {
  auto c = [](double) { return 3.25; };
  SparseDataset data = function_dataset(40, 5, c, 7);
  EvalGrid grid = make_grid(data.domain, 31);
  SmoothConfig cfg = fixed_cfg(0.15, 0.15);
  Eigen::VectorXd mu = smooth_mean(data, grid, cfg, 0);
  Eigen::VectorXd dmu = smooth_mean(data, grid, cfg, 1);
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(mu(i) - 3.25) < 1e-10);
    CHECK(std::abs(dmu(i)) < 1e-10);
  }
}

TEST_CASE("linear data is reproduced exactly with its slope") {
  auto lin = [](double t) { return -1.0 + 2.5 * t; };
  SparseDataset data = function_dataset(40, 5, lin, 8);
  EvalGrid grid = make_grid(data.domain, 31);
  SmoothConfig cfg = fixed_cfg(0.15, 0.15);
  Eigen::VectorXd mu = smooth_mean(data, grid, cfg, 0);
  Eigen::VectorXd dmu = smooth_mean(data, grid, cfg, 1);
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(mu(i) - lin(grid.t(i))) < 1e-10);
    CHECK(std::abs(dmu(i) - 2.5) < 1e-10);
  }
}

TEST_CASE("the truncated gaussian kernel also reproduces polynomials") {
  auto lin = [](double t) { return 0.3 - 1.7 * t; };
  SparseDataset data = function_dataset(40, 5, lin, 12);
  EvalGrid grid = make_grid(data.domain, 31);
  SmoothConfig cfg = fixed_cfg(0.08, 0.08);
  cfg.kernel.family = KernelFamily::GaussianTruncated;
  Eigen::VectorXd mu = smooth_mean(data, grid, cfg, 0);
  Eigen::VectorXd dmu = smooth_mean(data, grid, cfg, 1);
  for (int i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(mu(i) - lin(grid.t(i))) < 1e-10);
    CHECK(std::abs(dmu(i) + 1.7) < 1e-10);
  }
  Eigen::MatrixXd cov = smooth_cov(data, grid, cfg, mu, 0);
  CHECK(cov.cwiseAbs().maxCoeff() < 1e-9);  // no residual spread at all
}

TEST_CASE("quadratic data: the derivative fit reproduces the derivative") {
  auto quad = [](double t) { return 0.5 + t - 2.0 * t * t; };
  SparseDataset data = function_dataset(60, 6, quad, 9);
  EvalGrid grid = make_grid(data.domain, 31);
  SmoothConfig cfg = fixed_cfg(0.12, 0.12);
  Eigen::VectorXd dmu = smooth_mean(data, grid, cfg, 1);
  for (int i = 0; i < grid.size(); ++i) {
    if (grid.t(i) < 0.05 || grid.t(i) > 0.95) continue;
    CHECK(std::abs(dmu(i) - (1.0 - 4.0 * grid.t(i))) < 1e-9);
  }
}

TEST_CASE("noisy mean recovery stays within a tenth of the range") {
  TruthSpec spec;
  spec.mu.poly = {1.0, 4.0, -4.0};  // range 1
  spec.lambdas = {0.5, 0.1};
  spec.sigma2 = 0.01;
  spec.seed = 21;
  spec.sampling.n_min = 2;
  spec.sampling.n_max = 8;
  SimulatedSample s = sample_dataset(spec, 400);
  EvalGrid grid = make_grid(spec.domain, 101);
  SmoothConfig cfg = fixed_cfg(0.08, 0.08);
  Eigen::VectorXd mu = smooth_mean(s.data, grid, cfg, 0);
  double sup = 0.0;
  for (int i = 0; i < grid.size(); ++i) {
    if (grid.t(i) < 0.1 || grid.t(i) > 0.9) continue;
    sup = std::max(sup, std::abs(mu(i) - spec.mu.eval(grid.t(i), spec.domain)));
  }
  CHECK(sup < 0.1);
}

TEST_CASE("rank-one covariance surface and its partial derivative") {
  TruthSpec spec;
  spec.lambdas = {1.0};
  spec.sigma2 = 0.0;
  spec.seed = 31;
  spec.sampling.kind = SamplingSpec::Kind::Dense;
  spec.sampling.m_obs = 41;
  SimulatedSample s = sample_dataset(spec, 400);
  EvalGrid grid = make_grid(spec.domain, 21);
  SmoothConfig cfg = fixed_cfg(0.08, 0.05);
  Eigen::VectorXd mu = smooth_mean(s.data, grid, cfg, 0);
  Eigen::MatrixXd cov = smooth_cov(s.data, grid, cfg, mu, 0);
  Eigen::MatrixXd dcov = smooth_cov(s.data, grid, cfg, mu, 1);

  // boundary strips are excluded: one-sided windows carry the usual extra
  // bias there, handled separately by window widening
  double sup0 = 0.0, sup1 = 0.0, scale0 = 0.0, scale1 = 0.0;
  for (int i = 0; i < grid.size(); ++i)
    for (int j = 0; j < grid.size(); ++j) {
      if (grid.t(i) < 0.1 || grid.t(i) > 0.9 || grid.t(j) < 0.1 || grid.t(j) > 0.9) continue;
      const double g = trig_phi(1, grid.t(i), spec.domain) * trig_phi(1, grid.t(j), spec.domain);
      const double dg = trig_dphi(1, grid.t(i), spec.domain) * trig_phi(1, grid.t(j), spec.domain);
      sup0 = std::max(sup0, std::abs(cov(i, j) - g));
      sup1 = std::max(sup1, std::abs(dcov(i, j) - dg));
      scale0 = std::max(scale0, std::abs(g));
      scale1 = std::max(scale1, std::abs(dg));
    }
  CHECK(sup0 < 0.05 * scale0);
  CHECK(sup1 < 0.05 * scale1);
}

TEST_CASE("constant trajectories give a flat covariance surface") {
  // subjects come in +a/-a twins sharing their design, so the pooled mean
  // is exactly zero and every raw covariance equals the level variance
  SparseDataset data;
  data.domain = {0.0, 1.0};
  const double lambda = 0.7;
  const double a = std::sqrt(lambda);
  for (int i = 0; i < 10; ++i) {
    CounterRng rng(77, i);
    std::vector<double> times(5);
    for (auto& t : times) t = rng.next_uniform();
    std::sort(times.begin(), times.end());
    data.subjects.push_back({"p" + std::to_string(i), times, std::vector<double>(5, a)});
    data.subjects.push_back({"m" + std::to_string(i), times, std::vector<double>(5, -a)});
  }
  data.validate();
  EvalGrid grid = make_grid(data.domain, 21);
  SmoothConfig cfg = fixed_cfg(0.2, 0.15);
  Eigen::VectorXd mu = smooth_mean(data, grid, cfg, 0);
  CHECK(mu.cwiseAbs().maxCoeff() < 1e-12);
  Eigen::MatrixXd cov = smooth_cov(data, grid, cfg, mu, 0);
  Eigen::MatrixXd dcov = smooth_cov(data, grid, cfg, mu, 1);
  for (int i = 0; i < grid.size(); ++i)
    for (int j = 0; j < grid.size(); ++j) {
      CHECK(cov(i, j) == doctest::Approx(lambda).epsilon(1e-9));
      CHECK(std::abs(dcov(i, j)) < 1e-8);
    }
}

TEST_CASE("level surface output is exactly symmetric") {
  TruthSpec spec;
  spec.lambdas = {1.0, 0.25};
  spec.sigma2 = 0.01;
  spec.seed = 5;
  SimulatedSample s = sample_dataset(spec, 150);
  EvalGrid grid = make_grid(spec.domain, 21);
  SmoothConfig cfg = fixed_cfg(0.1, 0.12);
  Eigen::VectorXd mu = smooth_mean(s.data, grid, cfg, 0);
  Eigen::MatrixXd cov = smooth_cov(s.data, grid, cfg, mu, 0);
  CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("keeping same-index pairs inflates the fitted diagonal by the noise") {
  TruthSpec spec;
  spec.lambdas = {1.0, 0.25};
  spec.sigma2 = 0.25;
  spec.seed = 13;
  spec.sampling.n_min = 3;
  spec.sampling.n_max = 8;
  SimulatedSample s = sample_dataset(spec, 300);
  EvalGrid grid = make_grid(spec.domain, 21);
  SmoothConfig cfg = fixed_cfg(0.1, 0.12);
  Eigen::VectorXd mu = smooth_mean(s.data, grid, cfg, 0);
  Eigen::MatrixXd excl = smooth_cov(s.data, grid, cfg, mu, 0);
  SmoothConfig with_diag = cfg;
  with_diag.include_diagonal_pairs = true;
  Eigen::MatrixXd incl = smooth_cov(s.data, grid, cfg, mu, 0);
  incl = smooth_cov(s.data, grid, with_diag, mu, 0);
  double mean_gap = 0.0;
  for (int i = 0; i < grid.size(); ++i) mean_gap += incl(i, i) - excl(i, i);
  mean_gap /= grid.size();
  CHECK(mean_gap > 0.5 * spec.sigma2);
  CHECK(mean_gap < 2.0 * spec.sigma2);
}

TEST_CASE("noise variance estimation") {
  // a gentle single-component truth: the diagonal-difference estimator
  // carries an h^2 curvature term proportional to the derivative variance,
  // which must stay below the resolution being tested
  TruthSpec spec;
  spec.mu.poly = {1.0, 4.0, -4.0};
  spec.lambdas = {0.25};
  spec.seed = 17;
  spec.sampling.n_min = 2;
  spec.sampling.n_max = 8;
  EvalGrid grid = make_grid(spec.domain, 51);
  SmoothConfig cfg = fixed_cfg(0.08, 0.07);

  SUBCASE("noiseless data clamps at zero") {
    spec.sigma2 = 0.0;
    SimulatedSample s = sample_dataset(spec, 400);
    Eigen::VectorXd mu = smooth_mean(s.data, grid, cfg, 0);
    Eigen::MatrixXd cov = smooth_cov(s.data, grid, cfg, mu, 0);
    const double s2 = estimate_sigma2(s.data, grid, cfg, mu, cov);
    CHECK(s2 >= 0.0);
    CHECK(s2 < 5e-3);
  }

  SUBCASE("small noise is recovered within its bracket") {
    spec.sigma2 = 0.01;
    SimulatedSample s = sample_dataset(spec, 400);
    Eigen::VectorXd mu = smooth_mean(s.data, grid, cfg, 0);
    Eigen::MatrixXd cov = smooth_cov(s.data, grid, cfg, mu, 0);
    const double s2 = estimate_sigma2(s.data, grid, cfg, mu, cov);
    CHECK(s2 >= 0.005);
    CHECK(s2 <= 0.02);
  }

  SUBCASE("pure noise") {
    spec.mu.poly = {};
    spec.lambdas = {1e-12};
    spec.sigma2 = 1.0;
    SimulatedSample s = sample_dataset(spec, 400);
    Eigen::VectorXd mu = smooth_mean(s.data, grid, cfg, 0);
    Eigen::MatrixXd cov = smooth_cov(s.data, grid, cfg, mu, 0);
    const double s2 = estimate_sigma2(s.data, grid, cfg, mu, cov);
    CHECK(s2 == doctest::Approx(1.0).epsilon(0.15));
  }
}

TEST_CASE("candidate bandwidth grid spans the stated range") {
  const auto cand = bandwidth_candidates(1.0);
  REQUIRE(cand.size() == 10);
  CHECK(cand.front() == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(cand.back() == doctest::Approx(0.25).epsilon(1e-12));
  for (std::size_t i = 1; i < cand.size(); ++i) CHECK(cand[i] > cand[i - 1]);
}

TEST_CASE("too few subjects fall back to the fixed default") {
  TruthSpec spec;
  spec.lambdas = {1.0};
  spec.sigma2 = 0.01;
  spec.seed = 23;
  spec.sampling.n_min = 3;
  spec.sampling.n_max = 5;
  SimulatedSample s = sample_dataset(spec, 10);
  EvalGrid grid = make_grid(spec.domain, 21);
  RunLog log;
  SmoothConfig cfg = select_bandwidths(s.data, grid, KernelSpec{}, &log);
  CHECK(cfg.h_mu0 == doctest::Approx(0.1));
  CHECK(cfg.h_mu1 == doctest::Approx(0.15));
  CHECK(cfg.h_cov0 == doctest::Approx(0.1));
  CHECK(!log.notes.empty());
}

TEST_CASE("denser designs do not select larger mean bandwidths on average") {
  TruthSpec spec;
  spec.mu.poly = {0.0};
  spec.mu.cos_coeffs = {1.0};
  spec.lambdas = {0.3};
  spec.sigma2 = 0.04;
  double sparse_sum = 0.0, dense_sum = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    spec.seed = 100 + rep;
    spec.sampling.n_min = 2;
    spec.sampling.n_max = 4;
    SimulatedSample sp = sample_dataset(spec, 60);
    spec.sampling.n_min = 4;
    spec.sampling.n_max = 8;
    SimulatedSample dn = sample_dataset(spec, 60);
    EvalGrid grid = make_grid(spec.domain, 21);
    sparse_sum += select_bandwidths(sp.data, grid, KernelSpec{}).h_mu0;
    dense_sum += select_bandwidths(dn.data, grid, KernelSpec{}).h_mu0;
  }
  CHECK(dense_sum <= sparse_sum);
}

TEST_CASE("windows widen in data gaps and the event is logged") {
  SparseDataset data;
  data.domain = {0.0, 1.0};
  for (int i = 0; i < 30; ++i) {
    CounterRng rng(55, i);
    SubjectRecord rec;
    rec.id = "g" + std::to_string(i);
    for (int j = 0; j < 4; ++j) {
      const double u = rng.next_uniform();
      rec.times.push_back(u < 0.5 ? 0.4 * u * 2.0 : 0.6 + 0.4 * (u - 0.5) * 2.0);
    }
    std::sort(rec.times.begin(), rec.times.end());
    bool ok = true;
    for (int j = 1; j < 4; ++j)
      if (rec.times[j] == rec.times[j - 1]) ok = false;
    if (!ok) continue;
    for (double t : rec.times) rec.values.push_back(std::sin(t));
    data.subjects.push_back(std::move(rec));
  }
  data.validate();
  EvalGrid grid = make_grid(data.domain, 41);
  SmoothConfig cfg = fixed_cfg(0.03, 0.1);
  RunLog log;
  Eigen::VectorXd mu = smooth_mean(data, grid, cfg, 0, &log);
  CHECK(log.widen_events > 0);
  CHECK(log.max_widened_bandwidth > 0.03);
  CHECK(mu.allFinite());
}

TEST_CASE("a window that stays empty after widening is a hard error") {
  SparseDataset data;
  data.domain = {0.0, 1.0};
  data.subjects.push_back({"a", {0.0, 0.05, 0.1}, {1.0, 1.1, 1.2}});
  data.validate();
  EvalGrid grid = make_grid(data.domain, 11);
  SmoothConfig cfg = fixed_cfg(0.01, 0.01);
  CHECK_THROWS_AS(smooth_mean(data, grid, cfg, 0), estimation_error);
}

TEST_CASE("bandwidth validation") {
  SmoothConfig cfg;
  cfg.h_mu0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(1.0), config_error);
  cfg.h_mu0 = 2.0;
  CHECK_THROWS_AS(cfg.validate(1.0), config_error);
  cfg.h_mu0 = 0.1;
  CHECK_NOTHROW(cfg.validate(1.0));
}
