#include "empdyn/pipeline.hpp"

#include "empdyn/errors.hpp"

namespace empdyn {

void RunConfig::validate() const {
  if (grid_size < 2) throw config_error("grid size must be at least 2");
  if (!(fve > 0.0) || fve > 1.0) throw config_error("fve threshold must lie in (0, 1]");
  if (k_max < 1) throw config_error("kmax must be >= 1");
  if (!(floor_frac > 0.0)) throw config_error("floor fraction must be positive");
  if (!(r2_threshold > 0.0) || r2_threshold > 1.0)
    throw config_error("r2 threshold must lie in (0, 1]");
  if (top_extremes < 1) throw config_error("top extremes must be >= 1");
}

FitResult run_fit(const SparseDataset& data, const RunConfig& cfg) {
  cfg.validate();
  data.validate();
  FitResult out;
  out.grid = make_grid(data.domain, cfg.grid_size);

  if (cfg.auto_bandwidths) {
    out.bandwidths = select_bandwidths(data, out.grid, cfg.smooth.kernel, &out.log);
  } else {
    out.bandwidths = cfg.smooth;
    out.bandwidths.bandwidth_mode = BandwidthMode::Fixed;
  }
  out.bandwidths.validate(data.domain.length());

  SmoothConfig fixed = out.bandwidths;
  fixed.bandwidth_mode = BandwidthMode::Fixed;
  out.moments = estimate_moments(data, out.grid, fixed, &out.log);

  out.eig = eigendecompose(out.moments.cov, out.grid,
                           TruncationRule{cfg.fve, cfg.k_max}, &out.log);
  out.eig.dphi = eigenfunction_derivatives(out.moments.dcov, out.eig);
  return out;
}

DynamicsEstimate run_dynamics(const FitResult& fit, const RunConfig& cfg, RunLog* log) {
  return assemble_dynamics(fit.eig, TruncationRule{cfg.fve, cfg.k_max}, cfg.floor_frac, log);
}

PaceOutcome run_pace(const SparseDataset& data, const MomentEstimates& moments,
                     const EigenSystem& eig, const DynamicsEstimate& dyn,
                     const RunConfig& cfg) {
  PaceOutcome out;
  out.fits.reserve(data.subjects.size());
  for (const auto& subject : data.subjects) {
    try {
      out.fits.push_back(fit_subject(subject, moments, eig, dyn));
    } catch (const estimation_error&) {
      out.failed_subjects.push_back(subject.id);
    }
  }
  if (out.fits.empty())
    throw estimation_error("conditional fit failed for every subject");
  if (dyn.drift.K > 0)
    out.extremes = drift_score_extremes(out.fits, dyn.drift, cfg.top_extremes);
  return out;
}

}  // namespace empdyn
