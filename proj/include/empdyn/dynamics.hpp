#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "empdyn/eigenbasis.hpp"

namespace empdyn {

struct SubdomainInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::string regime;  // "regression-to-mean", "explosive" or "mixed"
};

// Pointwise components of the fitted dynamic equation
//   X'(t) - mu'(t) = beta(t) {X(t) - mu(t)} + Z(t)
// assembled from a truncated eigensystem with derivatives.
struct DynamicsEstimate {
  EvalGrid grid;
  Eigen::VectorXd beta;
  Eigen::VectorXd var_x;    // sum_k lambda_k phi_k^2
  Eigen::VectorXd var_dx;   // sum_k lambda_k dphi_k^2
  Eigen::VectorXd cov_xdx;  // sum_k lambda_k dphi_k phi_k
  Eigen::VectorXd var_z;    // drift variance V
  Eigen::VectorXd r2;       // fraction of var_dx explained by the linear part
  Eigen::MatrixXd cov_z;    // drift covariance surface
  EigenSystem drift;        // eigenpairs of cov_z (K = 0 when the drift vanishes)

  double floor_x = 0.0;   // denominator floors actually used
  double floor_dx = 0.0;
  long floor_events_x = 0;
  long floor_events_dx = 0;
  long clip_events_r2 = 0;
};

// Ratio of the truncated sums cov_xdx / var_x, with the denominator floored
// at floor_frac * max var_x. Flooring events are counted.
Eigen::VectorXd compute_beta(const EigenSystem& eig, double floor_frac = 1e-6,
                             long* floor_events = nullptr);

// Four-term drift covariance; symmetric positive semidefinite by construction.
Eigen::MatrixXd compute_drift_covariance(const EigenSystem& eig,
                                         const Eigen::VectorXd& beta);

// Squared correlation of level and derivative, clipped to [0,1]; both
// denominators floored as in compute_beta.
Eigen::VectorXd compute_r2(const EigenSystem& eig, double floor_frac = 1e-6,
                           long* floor_events = nullptr, long* clip_events = nullptr);

// Eigen-decomposition of the drift covariance; fails when cov_z has an
// eigenvalue below -1e-8 * trace, or no positive eigenvalues.
EigenSystem drift_eigen(const Eigen::MatrixXd& cov_z, const EvalGrid& grid,
                        const TruncationRule& rule = {}, RunLog* log = nullptr);

// Maximal grid-aligned intervals where r2 >= threshold, labeled by the sign
// pattern of beta on the interval.
std::vector<SubdomainInterval> subdomain_report(const DynamicsEstimate& dyn,
                                                double r2_threshold);

// Runs the full stage. A vanishing drift covariance leaves drift.K == 0
// rather than failing.
DynamicsEstimate assemble_dynamics(const EigenSystem& eig,
                                   const TruncationRule& drift_rule = {},
                                   double floor_frac = 1e-6, RunLog* log = nullptr);

}  // namespace empdyn
