#pragma once

#include <Eigen/Core>

#include "empdyn/dataset.hpp"
#include "empdyn/log.hpp"

namespace empdyn {

struct TruncationRule {
  double fve_threshold = 0.95;  // cumulative fraction of variance explained
  int k_max = 20;
};

// Truncated eigen-decomposition of a covariance surface on the grid.
// Eigenfunctions are orthonormal under the quadrature weights:
// sum_m w_m phi_j(t_m) phi_k(t_m) = delta_jk.
struct EigenSystem {
  EvalGrid grid;
  Eigen::VectorXd lambda;  // K positive values, descending
  Eigen::MatrixXd phi;     // M x K eigenfunctions
  Eigen::MatrixXd dphi;    // M x K eigenfunction derivatives (may be empty)
  Eigen::VectorXd fve;     // K cumulative variance fractions
  int K = 0;
  double total_variance = 0.0;  // sum over all positive eigenvalues

  bool has_derivatives() const { return dphi.size() > 0; }
};

// Discretizes the integral eigenproblem: with D = diag(quad weights), solves
// the symmetric problem for D^{1/2} G D^{1/2} and maps eigenvectors back by
// D^{-1/2}. Nonpositive eigenvalues are discarded; K is the smallest count
// reaching the FVE threshold, capped by k_max. Each eigenfunction is flipped
// so its entry of largest magnitude is positive (first index wins ties).
// If psd_tol_rel is >= 0, fails when an eigenvalue is below
// -psd_tol_rel * trace.
EigenSystem eigendecompose(const Eigen::MatrixXd& cov, const EvalGrid& grid,
                           const TruncationRule& rule = {}, RunLog* log = nullptr,
                           double psd_tol_rel = -1.0);

// Derivative of each eigenfunction via the differentiated eigen-identity:
// dphi_k(t) = (1/lambda_k) sum_j w_j dcov(t, t_j) phi_k(t_j).
Eigen::MatrixXd eigenfunction_derivatives(const Eigen::MatrixXd& dcov,
                                          const EigenSystem& eig);

// Plug-in covariance of the derivative process:
// sum_k lambda_k dphi_k(s) dphi_k(t). Symmetric PSD by construction.
Eigen::MatrixXd derivative_covariance(const EigenSystem& eig);

// Direct KL decomposition of a derivative covariance surface; same contract
// as eigendecompose.
EigenSystem kl_of_derivative(const Eigen::MatrixXd& cov11, const EvalGrid& grid,
                             const TruncationRule& rule = {}, RunLog* log = nullptr);

}  // namespace empdyn
