#include "empdyn/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "empdyn/errors.hpp"
#include "empdyn/rng.hpp"

namespace empdyn {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double MeanSpec::eval(double t, Interval dom) const {
  double v = 0.0, tp = 1.0;
  for (double c : poly) {
    v += c * tp;
    tp *= t;
  }
  const double tau = (t - dom.a) / dom.length();
  for (std::size_t k = 1; k <= cos_coeffs.size(); ++k)
    v += cos_coeffs[k - 1] * std::cos(kTwoPi * k * tau);
  return v;
}

double MeanSpec::eval_deriv(double t, Interval dom) const {
  double v = 0.0, tp = 1.0;
  for (std::size_t j = 1; j < poly.size(); ++j) {
    v += poly[j] * j * tp;
    tp *= t;
  }
  const double len = dom.length();
  const double tau = (t - dom.a) / len;
  for (std::size_t k = 1; k <= cos_coeffs.size(); ++k)
    v -= cos_coeffs[k - 1] * (kTwoPi * k / len) * std::sin(kTwoPi * k * tau);
  return v;
}

void TruthSpec::validate() const {
  if (lambdas.empty()) throw config_error("truth spec needs at least one component");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] > 0.0)) throw config_error("component variances must be positive");
    if (k > 0 && lambdas[k] > lambdas[k - 1])
      throw config_error("component variances must be descending");
  }
  if (sigma2 < 0.0) throw config_error("noise variance must be nonnegative");
  if (!(domain.b > domain.a)) throw config_error("domain must have positive length");
  if (sampling.kind == SamplingSpec::Kind::Dense) {
    if (sampling.m_obs < 2) throw config_error("dense design needs at least 2 points");
  } else {
    if (sampling.n_min < 1 || sampling.n_max < sampling.n_min)
      throw config_error("sparse design needs 1 <= n_min <= n_max");
  }
}

double trig_phi(int k, double t, Interval dom) {
  const double len = dom.length();
  const double tau = (t - dom.a) / len;
  return std::sqrt(2.0 / len) * std::cos(kTwoPi * k * tau);
}

double trig_dphi(int k, double t, Interval dom) {
  const double len = dom.length();
  const double tau = (t - dom.a) / len;
  return -std::sqrt(2.0 / len) * (kTwoPi * k / len) * std::sin(kTwoPi * k * tau);
}

SimulatedSample sample_dataset(const TruthSpec& spec, int n) {
  spec.validate();
  if (n < 1) throw config_error("need at least one subject");
  const int k_true = static_cast<int>(spec.lambdas.size());
  const Interval dom = spec.domain;
  const double sd = std::sqrt(spec.sigma2);

  SimulatedSample out;
  out.data.domain = dom;
  out.data.subjects.reserve(n);
  out.xi.resize(n, k_true);

  int id_width = 1;
  for (int p = n - 1; p >= 10; p /= 10) ++id_width;

  for (int i = 0; i < n; ++i) {
    CounterRng rng(spec.seed, static_cast<std::uint64_t>(i));
    SubjectRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%0*d", id_width, i + 1);
    rec.id = buf;

    for (int k = 0; k < k_true; ++k)
      out.xi(i, k) = std::sqrt(spec.lambdas[k]) * rng.next_normal();

    if (spec.sampling.kind == SamplingSpec::Kind::Dense) {
      const int m = spec.sampling.m_obs;
      rec.times.resize(m);
      for (int j = 0; j < m; ++j) rec.times[j] = dom.a + dom.length() * j / (m - 1);
      rec.times[m - 1] = dom.b;
    } else {
      const int m = rng.next_int(spec.sampling.n_min, spec.sampling.n_max);
      rec.times.resize(m);
      for (;;) {
        for (int j = 0; j < m; ++j) rec.times[j] = dom.a + dom.length() * rng.next_uniform();
        std::sort(rec.times.begin(), rec.times.end());
        bool distinct = true;
        for (int j = 1; j < m; ++j)
          if (rec.times[j] == rec.times[j - 1]) distinct = false;
        if (distinct) break;
      }
    }

    rec.values.resize(rec.times.size());
    for (std::size_t j = 0; j < rec.times.size(); ++j) {
      double x = spec.mu.eval(rec.times[j], dom);
      for (int k = 0; k < k_true; ++k) x += out.xi(i, k) * trig_phi(k + 1, rec.times[j], dom);
      rec.values[j] = sd > 0.0 ? x + sd * rng.next_normal() : x;
    }
    out.data.subjects.push_back(std::move(rec));
  }
  out.data.validate();
  return out;
}

EigenSystem exact_eigensystem(const std::vector<double>& lambdas, const EvalGrid& grid,
                              Interval dom) {
  const int k_true = static_cast<int>(lambdas.size());
  const int m = grid.size();
  EigenSystem eig;
  eig.grid = grid;
  eig.K = k_true;
  eig.lambda.resize(k_true);
  eig.phi.resize(m, k_true);
  eig.dphi.resize(m, k_true);
  eig.fve.resize(k_true);
  double total = 0.0;
  for (double l : lambdas) total += l;
  eig.total_variance = total;
  double cum = 0.0;
  for (int k = 0; k < k_true; ++k) {
    eig.lambda(k) = lambdas[k];
    cum += lambdas[k];
    eig.fve(k) = cum / total;
    for (int i = 0; i < m; ++i) {
      eig.phi(i, k) = trig_phi(k + 1, grid.t(i), dom);
      eig.dphi(i, k) = trig_dphi(k + 1, grid.t(i), dom);
    }
  }
  return eig;
}

MomentEstimates exact_moments(const TruthSpec& spec, const EvalGrid& grid) {
  const int m = grid.size();
  MomentEstimates mom;
  mom.grid = grid;
  mom.mu.resize(m);
  mom.dmu.resize(m);
  for (int i = 0; i < m; ++i) {
    mom.mu(i) = spec.mu.eval(grid.t(i), spec.domain);
    mom.dmu(i) = spec.mu.eval_deriv(grid.t(i), spec.domain);
  }
  const EigenSystem eig = exact_eigensystem(spec.lambdas, grid, spec.domain);
  mom.cov = eig.phi * eig.lambda.asDiagonal() * eig.phi.transpose();
  mom.dcov = eig.dphi * eig.lambda.asDiagonal() * eig.phi.transpose();
  mom.sigma2 = spec.sigma2;
  return mom;
}

Eigen::VectorXd analytic_r2(const std::vector<double>& lambdas, const EvalGrid& grid) {
  if (lambdas.empty()) throw config_error("need at least one component");
  const int m = grid.size();
  const Interval dom{grid.a(), grid.b()};
  const double len = dom.length();
  double sum_l = 0.0, sum_lk2 = 0.0;
  for (std::size_t k = 1; k <= lambdas.size(); ++k) {
    sum_l += lambdas[k - 1];
    sum_lk2 += lambdas[k - 1] * k * k;
  }
  Eigen::VectorXd out(m);
  for (int i = 0; i < m; ++i) {
    const double tau = (grid.t(i) - dom.a) / len;
    double c_var = 0.0, s_var = 0.0, cross = 0.0;
    for (std::size_t k = 1; k <= lambdas.size(); ++k) {
      const double c = std::cos(kTwoPi * k * tau);
      const double s = std::sin(kTwoPi * k * tau);
      c_var += lambdas[k - 1] * c * c;
      s_var += lambdas[k - 1] * k * k * s * s;
      cross += lambdas[k - 1] * k * s * c;
    }
    const double den = c_var * s_var;
    // the derivative variance vanishes only where every sine term does;
    // there is nothing to explain and the value is defined as 0
    out(i) = den > 1e-12 * sum_l * sum_lk2 ? cross * cross / den : 0.0;
    if (out(i) > 1.0) out(i) = 1.0;
  }
  return out;
}

Eigen::VectorXd analytic_r2(LambdaRule rule, int k_terms, const EvalGrid& grid) {
  if (k_terms < 1) throw config_error("need at least one term");
  std::vector<double> lambdas(k_terms);
  for (int k = 1; k <= k_terms; ++k)
    lambdas[k - 1] = rule == LambdaRule::PowerFour
                         ? 1.0 / (static_cast<double>(k) * k * k * k)
                         : std::pow(2.0, -k);
  return analytic_r2(lambdas, grid);
}

DynamicsEstimate analytic_dynamics(const TruthSpec& spec, const EvalGrid& grid,
                                   double floor_frac) {
  spec.validate();
  const int m = grid.size();
  const int kk = static_cast<int>(spec.lambdas.size());
  const Interval dom = spec.domain;

  DynamicsEstimate dyn;
  dyn.grid = grid;
  dyn.var_x.resize(m);
  dyn.var_dx.resize(m);
  dyn.cov_xdx.resize(m);
  for (int i = 0; i < m; ++i) {
    double vx = 0.0, vdx = 0.0, cx = 0.0;
    for (int k = 1; k <= kk; ++k) {
      const double p = trig_phi(k, grid.t(i), dom);
      const double dp = trig_dphi(k, grid.t(i), dom);
      vx += spec.lambdas[k - 1] * p * p;
      vdx += spec.lambdas[k - 1] * dp * dp;
      cx += spec.lambdas[k - 1] * dp * p;
    }
    dyn.var_x(i) = vx;
    dyn.var_dx(i) = vdx;
    dyn.cov_xdx(i) = cx;
  }

  dyn.floor_x = floor_frac * dyn.var_x.maxCoeff();
  dyn.floor_dx = floor_frac * dyn.var_dx.maxCoeff();
  dyn.beta.resize(m);
  dyn.var_z.resize(m);
  dyn.r2.resize(m);
  for (int i = 0; i < m; ++i) {
    double den = dyn.var_x(i);
    if (den < dyn.floor_x) {
      den = dyn.floor_x;
      ++dyn.floor_events_x;
    }
    dyn.beta(i) = dyn.cov_xdx(i) / den;
    const double v = (dyn.var_dx(i) * dyn.var_x(i) - dyn.cov_xdx(i) * dyn.cov_xdx(i)) / den;
    dyn.var_z(i) = v > 0.0 ? v : 0.0;
    double ddx = dyn.var_dx(i);
    if (ddx < dyn.floor_dx) {
      ddx = dyn.floor_dx;
      ++dyn.floor_events_dx;
    }
    double r = dyn.cov_xdx(i) * dyn.cov_xdx(i) / (den * ddx);
    if (r > 1.0) r = 1.0;
    dyn.r2(i) = r;
  }

  // four-term expansion by direct summation
  dyn.cov_z.resize(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
      for (int k = 1; k <= kk; ++k) {
        const double pi_ = trig_phi(k, grid.t(i), dom);
        const double pj = trig_phi(k, grid.t(j), dom);
        const double dpi = trig_dphi(k, grid.t(i), dom);
        const double dpj = trig_dphi(k, grid.t(j), dom);
        const double l = spec.lambdas[k - 1];
        a += l * dpi * dpj;
        b += l * pi_ * dpj;
        c += l * dpi * pj;
        d += l * pi_ * pj;
      }
      dyn.cov_z(i, j) =
          a - dyn.beta(i) * b - dyn.beta(j) * c + dyn.beta(i) * dyn.beta(j) * d;
    }
  dyn.cov_z = ((dyn.cov_z + dyn.cov_z.transpose()) * 0.5).eval();
  dyn.drift.grid = grid;
  return dyn;
}

Eigen::VectorXd integrate_forward(double x0, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& z_path, const Eigen::VectorXd& mu,
                                  const Eigen::VectorXd& dmu, const EvalGrid& grid,
                                  int steps_per_cell) {
  const int m = grid.size();
  if (beta.size() != m || z_path.size() != m || mu.size() != m || dmu.size() != m)
    throw config_error("coefficient functions must match the grid");
  if (steps_per_cell < 1) throw config_error("steps_per_cell must be >= 1");

  const auto rhs = [&](double t, double x) {
    return grid.interp(dmu, t) + grid.interp(beta, t) * (x - grid.interp(mu, t)) +
           grid.interp(z_path, t);
  };

  Eigen::VectorXd out(m);
  double x = x0;
  out(0) = x;
  for (int cell = 0; cell + 1 < m; ++cell) {
    const double dt = (grid.t(cell + 1) - grid.t(cell)) / steps_per_cell;
    double t = grid.t(cell);
    for (int s = 0; s < steps_per_cell; ++s) {
      const double k1 = rhs(t, x);
      const double k2 = rhs(t + dt / 2.0, x + dt / 2.0 * k1);
      const double k3 = rhs(t + dt / 2.0, x + dt / 2.0 * k2);
      const double k4 = rhs(t + dt, x + dt * k3);
      x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += dt;
    }
    out(cell + 1) = x;
  }
  return out;
}

}  // namespace empdyn
