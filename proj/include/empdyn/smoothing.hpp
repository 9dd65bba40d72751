#pragma once

#include <Eigen/Core>

#include "empdyn/dataset.hpp"
#include "empdyn/kernel.hpp"
#include "empdyn/log.hpp"

namespace empdyn {

enum class BandwidthMode { Fixed, CrossValidated };

struct SmoothConfig {
  double h_mu0 = 0.1;  // mean level
  double h_mu1 = 0.15; // mean derivative
  double h_cov0 = 0.1; // covariance surface
  double h_cov1 = 0.15;// covariance partial derivative
  KernelSpec kernel;
  BandwidthMode bandwidth_mode = BandwidthMode::Fixed;
  // Diagnostic switch: keeping same-index products inflates the fitted
  // diagonal by the measurement-error variance.
  bool include_diagonal_pairs = false;

  void validate(double domain_length) const;
};

// Pooled smoothed moments on the evaluation grid.
struct MomentEstimates {
  EvalGrid grid;
  Eigen::VectorXd mu;    // mean
  Eigen::VectorXd dmu;   // mean derivative
  Eigen::MatrixXd cov;   // covariance surface, symmetric
  Eigen::MatrixXd dcov;  // d/dt of the covariance surface (first argument)
  double sigma2 = 0.0;   // measurement-error variance
};

// Local polynomial fit of the pooled scatterplot; degree deriv+1,
// returns the deriv-th derivative estimate at each grid point.
Eigen::VectorXd smooth_mean(const SparseDataset& data, const EvalGrid& grid,
                            const SmoothConfig& cfg, int deriv, RunLog* log = nullptr);

// Local fit of pairwise raw covariances with same-index pairs excluded;
// polynomial degree deriv+1 in the first argument and 1 in the second.
// For deriv = 0 the result is symmetrized.
Eigen::MatrixXd smooth_cov(const SparseDataset& data, const EvalGrid& grid,
                           const SmoothConfig& cfg, const Eigen::VectorXd& mu_hat,
                           int deriv, RunLog* log = nullptr);

// Measurement-error variance: smooth the raw squared residuals on the
// diagonal and average the excess over the fitted surface diagonal on
// the central half of the domain. Clamped at zero.
double estimate_sigma2(const SparseDataset& data, const EvalGrid& grid,
                       const SmoothConfig& cfg, const Eigen::VectorXd& mu_hat,
                       const Eigen::MatrixXd& cov_hat, RunLog* log = nullptr);

// 10 log-spaced candidates spanning [L/50, L/4].
std::vector<double> bandwidth_candidates(double domain_length);

// Leave-one-subject-out CV for the mean bandwidth and 5-fold subject-wise CV
// for the covariance bandwidth over bandwidth_candidates(). Derivative
// bandwidths are 1.5x the level ones. Falls back to L/10 with a warning when
// fewer than 20 subjects.
SmoothConfig select_bandwidths(const SparseDataset& data, const EvalGrid& grid,
                               const KernelSpec& kernel, RunLog* log = nullptr);

// Runs the full moment stage: mean, derivative, both surfaces, sigma2.
MomentEstimates estimate_moments(const SparseDataset& data, const EvalGrid& grid,
                                 const SmoothConfig& cfg, RunLog* log = nullptr);

}  // namespace empdyn
