#include "empdyn/eigenbasis.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "empdyn/errors.hpp"

namespace empdyn {

EigenSystem eigendecompose(const Eigen::MatrixXd& cov, const EvalGrid& grid,
                           const TruncationRule& rule, RunLog* log, double psd_tol_rel) {
  const int m = grid.size();
  if (cov.rows() != m || cov.cols() != m)
    throw config_error("covariance does not match grid size");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw config_error("covariance surface is not symmetric");
  if (!(rule.fve_threshold > 0.0) || rule.fve_threshold > 1.0 || rule.k_max < 1)
    throw config_error("invalid truncation rule");

  Eigen::VectorXd sqw = grid.w.array().sqrt();
  Eigen::MatrixXd b(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) {
      const double v = sqw(i) * sqw(j) * 0.5 * (cov(i, j) + cov(j, i));
      b(i, j) = v;
      b(j, i) = v;
    }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  if (es.info() != Eigen::Success) throw estimation_error("eigen-solver did not converge");

  const Eigen::VectorXd& vals = es.eigenvalues();  // ascending
  const double vmax = vals(m - 1);
  if (psd_tol_rel >= 0.0) {
    const double trace = b.trace();
    if (vals(0) < -psd_tol_rel * std::max(trace, 0.0))
      throw estimation_error("covariance is not positive semidefinite: eigenvalue " +
                             std::to_string(vals(0)) + " below tolerance");
  }
  if (!(vmax > 0.0)) throw estimation_error("degenerate covariance: no positive eigenvalues");
  const double pos_tol = vmax * 1e-12;

  int n_pos = 0;
  double total = 0.0;
  for (int i = m - 1; i >= 0 && vals(i) > pos_tol; --i) {
    ++n_pos;
    total += vals(i);
  }

  // truncation by cumulative fraction of variance explained
  int k = n_pos;
  {
    double cum = 0.0;
    for (int i = 0; i < n_pos; ++i) {
      cum += vals(m - 1 - i);
      if (cum / total >= rule.fve_threshold) {
        k = i + 1;
        break;
      }
    }
  }
  k = std::min({k, rule.k_max, n_pos});

  EigenSystem eig;
  eig.grid = grid;
  eig.K = k;
  eig.total_variance = total;
  eig.lambda.resize(k);
  eig.phi.resize(m, k);
  eig.fve.resize(k);
  double cum = 0.0;
  for (int i = 0; i < k; ++i) {
    const int src = m - 1 - i;
    eig.lambda(i) = vals(src);
    cum += vals(src);
    eig.fve(i) = cum / total;
    Eigen::VectorXd col = es.eigenvectors().col(src).cwiseQuotient(sqw);
    // deterministic sign: entry of largest magnitude made positive
    int arg = 0;
    double best = std::abs(col(0));
    for (int j = 1; j < m; ++j)
      if (std::abs(col(j)) > best) {
        best = std::abs(col(j));
        arg = j;
      }
    if (col(arg) < 0.0) col = -col;
    eig.phi.col(i) = col;
  }

  if (log) {
    for (int i = 0; i + 1 < k; ++i)
      if (eig.lambda(i) - eig.lambda(i + 1) < 1e-10 * eig.lambda(0))
        log->note("eigendecompose: near-tied eigenvalues at k=" + std::to_string(i + 1));
  }
  return eig;
}

Eigen::MatrixXd eigenfunction_derivatives(const Eigen::MatrixXd& dcov,
                                          const EigenSystem& eig) {
  const int m = eig.grid.size();
  if (dcov.rows() != m || dcov.cols() != m)
    throw config_error("derivative surface does not match grid size");
  Eigen::MatrixXd dphi = dcov * (eig.grid.w.asDiagonal() * eig.phi);
  for (int k = 0; k < eig.K; ++k) dphi.col(k) /= eig.lambda(k);
  return dphi;
}

Eigen::MatrixXd derivative_covariance(const EigenSystem& eig) {
  if (!eig.has_derivatives()) throw config_error("eigenfunction derivatives not populated");
  const int m = eig.grid.size();
  Eigen::MatrixXd out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (int k = 0; k < eig.K; ++k) acc += eig.lambda(k) * eig.dphi(i, k) * eig.dphi(j, k);
      out(i, j) = acc;
      out(j, i) = acc;
    }
  return out;
}

EigenSystem kl_of_derivative(const Eigen::MatrixXd& cov11, const EvalGrid& grid,
                             const TruncationRule& rule, RunLog* log) {
  return eigendecompose(cov11, grid, rule, log);
}

}  // namespace empdyn
