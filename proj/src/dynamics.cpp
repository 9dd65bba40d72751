#include "empdyn/dynamics.hpp"

#include <cmath>

#include "empdyn/errors.hpp"

namespace empdyn {

namespace {

void require_derivatives(const EigenSystem& eig) {
  if (eig.K < 1) throw estimation_error("empty eigensystem");
  if (!eig.has_derivatives())
    throw config_error("eigensystem has no derivative functions");
}

struct Sums {
  Eigen::VectorXd var_x, var_dx, cov_xdx;
};

Sums moment_sums(const EigenSystem& eig) {
  Sums s;
  const int m = eig.grid.size();
  s.var_x = Eigen::VectorXd::Zero(m);
  s.var_dx = Eigen::VectorXd::Zero(m);
  s.cov_xdx = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < eig.K; ++k) {
    s.var_x.array() += eig.lambda(k) * eig.phi.col(k).array().square();
    s.var_dx.array() += eig.lambda(k) * eig.dphi.col(k).array().square();
    s.cov_xdx.array() += eig.lambda(k) * eig.dphi.col(k).array() * eig.phi.col(k).array();
  }
  return s;
}

}  // namespace

Eigen::VectorXd compute_beta(const EigenSystem& eig, double floor_frac, long* floor_events) {
  require_derivatives(eig);
  const Sums s = moment_sums(eig);
  const double vmax = s.var_x.maxCoeff();
  if (!(vmax > 0.0)) throw estimation_error("variance function is identically zero");
  const double floor = floor_frac * vmax;
  Eigen::VectorXd beta(eig.grid.size());
  for (int i = 0; i < beta.size(); ++i) {
    double den = s.var_x(i);
    if (den < floor) {
      den = floor;
      if (floor_events) ++*floor_events;
    }
    beta(i) = s.cov_xdx(i) / den;
  }
  return beta;
}

Eigen::MatrixXd compute_drift_covariance(const EigenSystem& eig, const Eigen::VectorXd& beta) {
  require_derivatives(eig);
  const int m = eig.grid.size();
  if (beta.size() != m) throw config_error("beta does not match grid size");
  // residual directions dphi_k - beta phi_k; the four-term expansion of the
  // drift covariance collapses to their weighted outer products, which keeps
  // the result symmetric PSD without an extra symmetrization pass
  Eigen::MatrixXd zeta = eig.dphi - beta.asDiagonal() * eig.phi;
  Eigen::MatrixXd out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (int k = 0; k < eig.K; ++k) acc += eig.lambda(k) * zeta(i, k) * zeta(j, k);
      out(i, j) = acc;
      out(j, i) = acc;
    }
  return out;
}

Eigen::VectorXd compute_r2(const EigenSystem& eig, double floor_frac, long* floor_events,
                           long* clip_events) {
  require_derivatives(eig);
  const Sums s = moment_sums(eig);
  const double fx = floor_frac * s.var_x.maxCoeff();
  const double fdx = floor_frac * s.var_dx.maxCoeff();
  Eigen::VectorXd r2(eig.grid.size());
  for (int i = 0; i < r2.size(); ++i) {
    double dx = s.var_x(i), ddx = s.var_dx(i);
    if (dx < fx) {
      dx = fx;
      if (floor_events) ++*floor_events;
    }
    if (ddx < fdx) {
      ddx = fdx;
      if (floor_events) ++*floor_events;
    }
    double v = s.cov_xdx(i) * s.cov_xdx(i) / (dx * ddx);
    if (v > 1.0) {
      v = 1.0;
      if (clip_events) ++*clip_events;
    }
    if (v < 0.0) v = 0.0;
    r2(i) = v;
  }
  return r2;
}

EigenSystem drift_eigen(const Eigen::MatrixXd& cov_z, const EvalGrid& grid,
                        const TruncationRule& rule, RunLog* log) {
  return eigendecompose(cov_z, grid, rule, log, 1e-8);
}

std::vector<SubdomainInterval> subdomain_report(const DynamicsEstimate& dyn,
                                                double r2_threshold) {
  if (!(r2_threshold > 0.0) || r2_threshold > 1.0)
    throw config_error("r2 threshold must lie in (0, 1]");
  std::vector<SubdomainInterval> out;
  const int m = dyn.grid.size();
  int i = 0;
  while (i < m) {
    if (dyn.r2(i) < r2_threshold) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < m && dyn.r2(j + 1) >= r2_threshold) ++j;
    bool has_neg = false, has_pos = false;
    for (int k = i; k <= j; ++k) {
      if (dyn.beta(k) < 0.0) has_neg = true;
      if (dyn.beta(k) > 0.0) has_pos = true;
    }
    SubdomainInterval iv;
    iv.lo = dyn.grid.t(i);
    iv.hi = dyn.grid.t(j);
    iv.regime = has_neg && !has_pos   ? "regression-to-mean"
                : has_pos && !has_neg ? "explosive"
                                      : "mixed";
    out.push_back(iv);
    i = j + 1;
  }
  return out;
}

DynamicsEstimate assemble_dynamics(const EigenSystem& eig, const TruncationRule& drift_rule,
                                   double floor_frac, RunLog* log) {
  require_derivatives(eig);
  DynamicsEstimate dyn;
  dyn.grid = eig.grid;
  const Sums s = moment_sums(eig);
  dyn.var_x = s.var_x;
  dyn.var_dx = s.var_dx;
  dyn.cov_xdx = s.cov_xdx;
  const double vmax = s.var_x.maxCoeff();
  if (!(vmax > 0.0)) throw estimation_error("variance function is identically zero");
  dyn.floor_x = floor_frac * vmax;
  dyn.floor_dx = floor_frac * s.var_dx.maxCoeff();

  const int m = dyn.grid.size();
  dyn.beta.resize(m);
  dyn.var_z.resize(m);
  dyn.r2.resize(m);
  for (int i = 0; i < m; ++i) {
    double den = s.var_x(i);
    if (den < dyn.floor_x) {
      den = dyn.floor_x;
      ++dyn.floor_events_x;
    }
    dyn.beta(i) = s.cov_xdx(i) / den;
    // drift variance via the covariance form; the numerator cancels exactly
    // when one component dominates
    double v = (s.var_dx(i) * s.var_x(i) - s.cov_xdx(i) * s.cov_xdx(i)) / den;
    dyn.var_z(i) = v > 0.0 ? v : 0.0;

    double ddx = s.var_dx(i);
    if (ddx < dyn.floor_dx) {
      ddx = dyn.floor_dx;
      ++dyn.floor_events_dx;
    }
    double r = s.cov_xdx(i) * s.cov_xdx(i) / (den * ddx);
    if (r > 1.0) {
      r = 1.0;
      ++dyn.clip_events_r2;
    }
    dyn.r2(i) = r;
  }

  dyn.cov_z = compute_drift_covariance(eig, dyn.beta);
  // natural magnitude of the drift surface; below rounding level of that
  // scale the drift is treated as absent (single-component degeneracy)
  const double gz_scale =
      s.var_dx.maxCoeff() + (dyn.beta.array().square() * s.var_x.array()).maxCoeff();
  if (dyn.cov_z.cwiseAbs().maxCoeff() <= 1e-12 * gz_scale) {
    dyn.drift = EigenSystem{};
    dyn.drift.grid = dyn.grid;
    if (log) log->note("drift covariance vanishes: no drift components");
    return dyn;
  }
  try {
    dyn.drift = drift_eigen(dyn.cov_z, dyn.grid, drift_rule, log);
  } catch (const estimation_error& e) {
    dyn.drift = EigenSystem{};
    dyn.drift.grid = dyn.grid;
    if (log) log->note(std::string("drift decomposition skipped: ") + e.what());
  }
  return dyn;
}

}  // namespace empdyn
