#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "empdyn/dataset.hpp"
#include "empdyn/dynamics.hpp"
#include "empdyn/pace.hpp"
#include "empdyn/smoothing.hpp"

namespace empdyn {

// Resolved options for one estimation run.
struct RunConfig {
  int grid_size = 101;
  bool auto_bandwidths = true;
  SmoothConfig smooth;  // used when auto_bandwidths is false
  double fve = 0.95;
  int k_max = 20;
  double floor_frac = 1e-6;
  double r2_threshold = 0.9;
  int top_extremes = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitResult {
  EvalGrid grid;
  MomentEstimates moments;
  EigenSystem eig;          // with derivative functions populated
  SmoothConfig bandwidths;  // bandwidths actually used
  RunLog log;
};

// Moment smoothing, eigen-decomposition and eigenfunction derivatives.
FitResult run_fit(const SparseDataset& data, const RunConfig& cfg);

DynamicsEstimate run_dynamics(const FitResult& fit, const RunConfig& cfg, RunLog* log = nullptr);

struct PaceOutcome {
  std::vector<SubjectFit> fits;
  std::vector<std::string> failed_subjects;
  std::vector<std::vector<ExtremeEntry>> extremes;
};

// Fits every subject, skipping (and reporting) per-subject failures;
// fails only when no subject can be fitted.
PaceOutcome run_pace(const SparseDataset& data, const MomentEstimates& moments,
                     const EigenSystem& eig, const DynamicsEstimate& dyn,
                     const RunConfig& cfg);

}  // namespace empdyn
