#include "empdyn/pace.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "empdyn/errors.hpp"

namespace empdyn {

Eigen::VectorXd conditional_scores(const SubjectRecord& subject,
                                   const MomentEstimates& moments, const EigenSystem& eig,
                                   const PaceOptions& opts) {
  const int n = subject.n_obs();
  const int k = eig.K;
  if (n < 1) throw config_error("subject " + subject.id + " has no observations");
  if (k < 1) throw estimation_error("empty eigensystem");

  Eigen::VectorXd centered(n);
  Eigen::MatrixXd phi_obs(n, k);
  const EvalGrid& grid = eig.grid;
  for (int j = 0; j < n; ++j) {
    const double t = subject.times[j];
    centered(j) = subject.values[j] - grid.interp(moments.mu, t);
    for (int c = 0; c < k; ++c) phi_obs(j, c) = grid.interp(eig.phi.col(c), t);
  }

  double noise = moments.sigma2;
  if (noise <= 0.0 && opts.use_sigma_floor)
    noise = 1e-8 * moments.cov.trace() / grid.size();

  Eigen::MatrixXd sigma_y = phi_obs * eig.lambda.asDiagonal() * phi_obs.transpose();
  sigma_y.diagonal().array() += noise;

  Eigen::VectorXd solved(n);
  if (noise > 0.0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma_y);
    if (ldlt.info() != Eigen::Success)
      throw estimation_error("conditioning matrix failed for subject " + subject.id);
    solved = ldlt.solve(centered);
  } else {
    // noise-free case: solve on the numerically nonzero eigenspace, requiring
    // the observation vector to be consistent with it
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_y);
    if (es.info() != Eigen::Success)
      throw estimation_error("conditioning matrix failed for subject " + subject.id);
    const double cutoff = std::max(es.eigenvalues().maxCoeff(), 0.0) * 1e-12;
    if (!(cutoff > 0.0))
      throw estimation_error("singular conditioning matrix for subject " + subject.id);
    Eigen::VectorXd proj = es.eigenvectors().transpose() * centered;
    Eigen::VectorXd scaled = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j)
      if (es.eigenvalues()(j) > cutoff) scaled(j) = proj(j) / es.eigenvalues()(j);
    solved = es.eigenvectors() * scaled;
    const double resid = (sigma_y * solved - centered).norm();
    if (resid > 1e-8 * (centered.norm() + 1e-30) && centered.norm() > 0.0)
      throw estimation_error("singular conditioning matrix for subject " + subject.id);
  }

  return eig.lambda.asDiagonal() * (phi_obs.transpose() * solved);
}

SubjectFit fit_subject(const SubjectRecord& subject, const MomentEstimates& moments,
                       const EigenSystem& eig, const DynamicsEstimate& dyn,
                       const PaceOptions& opts) {
  if (!eig.has_derivatives())
    throw config_error("eigensystem has no derivative functions");
  SubjectFit fit;
  fit.id = subject.id;
  fit.scores = conditional_scores(subject, moments, eig, opts);
  fit.xhat = moments.mu + eig.phi * fit.scores;
  fit.dxhat = moments.dmu + eig.dphi * fit.scores;
  // drift path in the residual directions dphi_k - beta phi_k, which makes
  // the rearranged equation hold to rounding
  fit.zhat = (eig.dphi - dyn.beta.asDiagonal() * eig.phi) * fit.scores;
  return fit;
}

std::vector<std::vector<ExtremeEntry>> drift_score_extremes(
    const std::vector<SubjectFit>& fits, const EigenSystem& drift, int top) {
  if (fits.empty()) throw config_error("no subject fits");
  if (drift.K < 1) throw config_error("empty drift decomposition");
  if (top < 1) throw config_error("top must be >= 1");

  std::vector<std::vector<ExtremeEntry>> out(drift.K);
  const Eigen::MatrixXd weighted = drift.grid.w.asDiagonal() * drift.phi;  // M x Kz
  for (int k = 0; k < drift.K; ++k) {
    std::vector<ExtremeEntry> all(fits.size());
    for (std::size_t i = 0; i < fits.size(); ++i) {
      all[i].id = fits[i].id;
      all[i].score = weighted.col(k).dot(fits[i].zhat);
    }
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(all[a].score) > std::abs(all[b].score);
    });
    const int keep = std::min<std::size_t>(top, all.size());
    out[k].reserve(keep);
    for (int i = 0; i < keep; ++i) out[k].push_back(all[order[i]]);
  }
  return out;
}

}  // namespace empdyn
