#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "empdyn/dataset.hpp"
#include "empdyn/dynamics.hpp"
#include "empdyn/eigenbasis.hpp"
#include "empdyn/smoothing.hpp"

namespace empdyn {

struct PaceOptions {
  // When the error variance estimate is zero, a ridge of
  // 1e-8 * trace(cov)/M keeps the conditioning matrix invertible.
  // Disable for exact-recovery checks on noiseless data.
  bool use_sigma_floor = true;
};

// Per-subject conditional fit on the evaluation grid.
struct SubjectFit {
  std::string id;
  Eigen::VectorXd scores;  // K conditional score estimates
  Eigen::VectorXd xhat;    // fitted trajectory
  Eigen::VectorXd dxhat;   // fitted derivative
  Eigen::VectorXd zhat;    // fitted drift path: dxhat - dmu - beta (xhat - mu)
};

// Best predictor of the subject's scores given its observations, under
// Gaussian assumptions. Grid functions are linearly interpolated to the
// observation times.
Eigen::VectorXd conditional_scores(const SubjectRecord& subject,
                                   const MomentEstimates& moments,
                                   const EigenSystem& eig,
                                   const PaceOptions& opts = {});

SubjectFit fit_subject(const SubjectRecord& subject, const MomentEstimates& moments,
                       const EigenSystem& eig, const DynamicsEstimate& dyn,
                       const PaceOptions& opts = {});

struct ExtremeEntry {
  std::string id;
  double score = 0.0;
};

// Quadrature projections of each fitted drift path onto the drift
// eigenfunctions; returns, per component, the `top` subjects by |score|.
std::vector<std::vector<ExtremeEntry>> drift_score_extremes(
    const std::vector<SubjectFit>& fits, const EigenSystem& drift, int top);

}  // namespace empdyn
