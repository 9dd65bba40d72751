#include "empdyn/smoothing.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <span>
#include <unordered_map>

#include "empdyn/errors.hpp"

namespace empdyn {

void SmoothConfig::validate(double domain_length) const {
  for (double h : {h_mu0, h_mu1, h_cov0, h_cov1}) {
    if (!(h > 0.0) || !(h < domain_length))
      throw config_error("bandwidths must lie in (0, domain length)");
  }
}

namespace {

constexpr int kMaxWiden = 6;
constexpr double kWidenFactor = 1.5;

// Aggregated scatter point: several raw observations sharing one location.
struct Pt1 {
  double t, c, sy, syy;
};
struct Pt2 {
  double t, s, c, sy, syy;
};

void note_widen(RunLog* log, const char* op, double at, double h_final) {
  if (!log) return;
  ++log->widen_events;
  log->max_widened_bandwidth = std::max(log->max_widened_bandwidth, h_final);
  log->note(std::string(op) + ": widened window to h=" + std::to_string(h_final) +
            " at t=" + std::to_string(at));
}

class Scatter1D {
 public:
  explicit Scatter1D(std::vector<std::pair<double, double>> raw) {
    std::sort(raw.begin(), raw.end());
    pts_.reserve(raw.size());
    for (const auto& [t, y] : raw) {
      if (!pts_.empty() && pts_.back().t == t) {
        pts_.back().c += 1.0;
        pts_.back().sy += y;
        pts_.back().syy += y * y;
      } else {
        pts_.push_back({t, 1.0, y, y * y});
      }
    }
    ts_.reserve(pts_.size());
    for (const auto& p : pts_) ts_.push_back(p.t);
  }

  long n_points() const {
    long n = 0;
    for (const auto& p : pts_) n += static_cast<long>(p.c);
    return n;
  }

  // Local polynomial fit at x; returns the deriv-th derivative estimate.
  // `excl` holds raw (t, y) observations, sorted by t, to leave out.
  double fit(double x, double h0, int degree, int deriv, const KernelSpec& kern,
             std::span<const std::pair<double, double>> excl, RunLog* log,
             const char* op) const {
    const double radius = kern.support();
    const int min_count = deriv + 2;
    double h = h0;
    for (int attempt = 0;; ++attempt) {
      const double lo = x - radius * h, hi = x + radius * h;
      const auto i0 = std::lower_bound(ts_.begin(), ts_.end(), lo) - ts_.begin();
      const auto i1 = std::upper_bound(ts_.begin(), ts_.end(), hi) - ts_.begin();

      double count = 0.0;
      for (auto i = i0; i < i1; ++i)
        if (std::abs(pts_[i].t - x) < radius * h) count += pts_[i].c;
      for (const auto& [t, y] : excl)
        if (std::abs(t - x) < radius * h) count -= 1.0;

      if (count >= min_count) {
        const int p = degree;
        Eigen::VectorXd mom = Eigen::VectorXd::Zero(2 * p + 1);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p + 1);
        double wtot = 0.0;
        for (auto i = i0; i < i1; ++i) {
          const double u = (pts_[i].t - x) / h;
          const double w = kern(u);
          if (w <= 0.0) continue;
          const double wc = w * pts_[i].c;
          wtot += wc;
          double up = 1.0;
          for (int m = 0; m <= 2 * p; ++m) {
            mom(m) += wc * up;
            if (m <= p) rhs(m) += w * pts_[i].sy * up;
            up *= u;
          }
        }
        for (const auto& [t, y] : excl) {
          const double u = (t - x) / h;
          const double w = kern(u);
          if (w <= 0.0) continue;
          wtot -= w;
          double up = 1.0;
          for (int m = 0; m <= 2 * p; ++m) {
            mom(m) -= w * up;
            if (m <= p) rhs(m) -= w * y * up;
            up *= u;
          }
        }
        if (wtot > 0.0) {
          Eigen::MatrixXd gram(p + 1, p + 1);
          for (int r = 0; r <= p; ++r)
            for (int cidx = 0; cidx <= p; ++cidx) gram(r, cidx) = mom(r + cidx) / wtot;
          Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
          if (lu.isInvertible()) {
            const Eigen::VectorXd a = lu.solve(rhs / wtot);
            if (attempt > 0) note_widen(log, op, x, h);
            return a(deriv) / std::pow(h, deriv);
          }
        }
      }
      if (attempt >= kMaxWiden)
        throw estimation_error(std::string(op) + ": singular local fit at t=" +
                               std::to_string(x) + " after widening to h=" +
                               std::to_string(h));
      h *= kWidenFactor;
    }
  }

 private:
  std::vector<Pt1> pts_;
  std::vector<double> ts_;
};

class Scatter2D {
 public:
  explicit Scatter2D(std::vector<Pt2> pts) : pts_(std::move(pts)) {
    std::sort(pts_.begin(), pts_.end(), [](const Pt2& a, const Pt2& b) {
      return a.t != b.t ? a.t < b.t : a.s < b.s;
    });
    ts_.reserve(pts_.size());
    for (const auto& p : pts_) ts_.push_back(p.t);
  }

  bool empty() const { return pts_.empty(); }

  // Local fit with degree deriv+1 in the first coordinate and degree 1 in
  // the second; returns the deriv-th partial derivative in the first.
  double fit(double x, double y, double h0, int deriv, const KernelSpec& kern,
             RunLog* log, const char* op) const {
    const double radius = kern.support();
    const int q = deriv + 3;  // 1, u[, u^2], v
    double h = h0;
    for (int attempt = 0;; ++attempt) {
      const double rh = radius * h;
      const auto i0 = std::lower_bound(ts_.begin(), ts_.end(), x - rh) - ts_.begin();
      const auto i1 = std::upper_bound(ts_.begin(), ts_.end(), x + rh) - ts_.begin();

      double count = 0.0;
      for (auto i = i0; i < i1; ++i)
        if (std::abs(pts_[i].t - x) < rh && std::abs(pts_[i].s - y) < rh)
          count += pts_[i].c;

      if (count >= q) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
        double wtot = 0.0;
        Eigen::VectorXd basis(q);
        for (auto i = i0; i < i1; ++i) {
          const double u = (pts_[i].t - x) / h;
          const double v = (pts_[i].s - y) / h;
          const double w = kern(u) * kern(v);
          if (w <= 0.0) continue;
          basis(0) = 1.0;
          basis(1) = u;
          if (deriv == 1) basis(2) = u * u;
          basis(q - 1) = v;
          const double wc = w * pts_[i].c;
          wtot += wc;
          for (int r = 0; r < q; ++r) {
            rhs(r) += w * pts_[i].sy * basis(r);
            for (int cidx = r; cidx < q; ++cidx) gram(r, cidx) += wc * basis(r) * basis(cidx);
          }
        }
        if (wtot > 0.0) {
          for (int r = 0; r < q; ++r)
            for (int cidx = 0; cidx < r; ++cidx) gram(r, cidx) = gram(cidx, r);
          gram /= wtot;
          Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
          if (lu.isInvertible()) {
            const Eigen::VectorXd a = lu.solve(rhs / wtot);
            if (attempt > 0) note_widen(log, op, x, h);
            return deriv == 0 ? a(0) : a(1) / h;
          }
        }
      }
      if (attempt >= kMaxWiden)
        throw estimation_error(std::string(op) + ": singular local fit at (" +
                               std::to_string(x) + ", " + std::to_string(y) +
                               ") after widening to h=" + std::to_string(h));
      h *= kWidenFactor;
    }
  }

 private:
  std::vector<Pt2> pts_;
  std::vector<double> ts_;
};

std::vector<std::pair<double, double>> pooled_obs(const SparseDataset& data) {
  std::vector<std::pair<double, double>> raw;
  raw.reserve(data.total_obs());
  for (const auto& s : data.subjects)
    for (std::size_t j = 0; j < s.times.size(); ++j) raw.emplace_back(s.times[j], s.values[j]);
  return raw;
}

struct PairKey {
  double t, s;
  bool operator==(const PairKey& o) const { return t == o.t && s == o.s; }
};
struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const {
    std::uint64_t a, b;
    std::memcpy(&a, &k.t, 8);
    std::memcpy(&b, &k.s, 8);
    a ^= b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2);
    return static_cast<std::size_t>(a * 0xBF58476D1CE4E5B9ull);
  }
};

// Pairwise raw covariances, same-index pairs excluded unless requested.
// Duplicate locations (common-design data) are merged.
std::vector<Pt2> raw_cov_points(const SparseDataset& data, const EvalGrid& grid,
                                const Eigen::VectorXd& mu_hat, bool include_diag) {
  std::unordered_map<PairKey, Pt2, PairKeyHash> agg;
  std::vector<double> resid;
  for (const auto& s : data.subjects) {
    const int n = s.n_obs();
    if (n < 2 && !include_diag) continue;
    resid.resize(n);
    for (int j = 0; j < n; ++j) resid[j] = s.values[j] - grid.interp(mu_hat, s.times[j]);
    for (int j = 0; j < n; ++j) {
      for (int l = 0; l < n; ++l) {
        if (j == l && !include_diag) continue;
        const double rc = resid[j] * resid[l];
        PairKey key{s.times[j], s.times[l]};
        auto [it, inserted] = agg.try_emplace(key, Pt2{key.t, key.s, 0.0, 0.0, 0.0});
        it->second.c += 1.0;
        it->second.sy += rc;
        it->second.syy += rc * rc;
      }
    }
  }
  std::vector<Pt2> pts;
  pts.reserve(agg.size());
  for (auto& [k, v] : agg) pts.push_back(v);
  return pts;
}

}  // namespace

Eigen::VectorXd smooth_mean(const SparseDataset& data, const EvalGrid& grid,
                            const SmoothConfig& cfg, int deriv, RunLog* log) {
  if (deriv < 0 || deriv > 1) throw config_error("deriv must be 0 or 1");
  const double h = deriv == 0 ? cfg.h_mu0 : cfg.h_mu1;
  const char* op = deriv == 0 ? "smooth_mean" : "smooth_mean_deriv";
  Scatter1D sc(pooled_obs(data));
  Eigen::VectorXd out(grid.size());
  for (int i = 0; i < grid.size(); ++i)
    out(i) = sc.fit(grid.t(i), h, deriv + 1, deriv, cfg.kernel, {}, log, op);
  return out;
}

Eigen::MatrixXd smooth_cov(const SparseDataset& data, const EvalGrid& grid,
                           const SmoothConfig& cfg, const Eigen::VectorXd& mu_hat,
                           int deriv, RunLog* log) {
  if (deriv < 0 || deriv > 1) throw config_error("deriv must be 0 or 1");
  if (mu_hat.size() != grid.size()) throw config_error("mu_hat does not match grid");
  const double h = deriv == 0 ? cfg.h_cov0 : cfg.h_cov1;
  const char* op = deriv == 0 ? "smooth_cov" : "smooth_cov_deriv";
  Scatter2D sc(raw_cov_points(data, grid, mu_hat, cfg.include_diagonal_pairs));
  if (sc.empty())
    throw estimation_error("no off-diagonal raw covariances: need a subject with >= 2 observations");
  const int m = grid.size();
  Eigen::MatrixXd out(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      out(a, b) = sc.fit(grid.t(a), grid.t(b), h, deriv, cfg.kernel, log, op);
  if (deriv == 0) out = ((out + out.transpose()) * 0.5).eval();
  return out;
}

double estimate_sigma2(const SparseDataset& data, const EvalGrid& grid,
                       const SmoothConfig& cfg, const Eigen::VectorXd& mu_hat,
                       const Eigen::MatrixXd& cov_hat, RunLog* log) {
  std::vector<std::pair<double, double>> diag;
  diag.reserve(data.total_obs());
  for (const auto& s : data.subjects)
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      const double r = s.values[j] - grid.interp(mu_hat, s.times[j]);
      diag.emplace_back(s.times[j], r * r);
    }
  Scatter1D sc(std::move(diag));

  const double a = grid.a(), len = grid.b() - grid.a();
  const double lo = a + len / 4.0, hi = grid.b() - len / 4.0;
  double acc = 0.0, wsum = 0.0;
  for (int i = 0; i < grid.size(); ++i) {
    if (grid.t(i) < lo || grid.t(i) > hi) continue;
    const double vtilde =
        sc.fit(grid.t(i), cfg.h_cov0, 1, 0, cfg.kernel, {}, log, "sigma2_diag");
    acc += grid.w(i) * (vtilde - cov_hat(i, i));
    wsum += grid.w(i);
  }
  double s2 = wsum > 0.0 ? acc / wsum : 0.0;
  if (s2 < 0.0) {
    if (log) {
      ++log->clamp_events;
      log->note("estimate_sigma2: negative estimate " + std::to_string(s2) + " clamped to 0");
    }
    s2 = 0.0;
  }
  return s2;
}

std::vector<double> bandwidth_candidates(double domain_length) {
  constexpr int kCand = 10;
  std::vector<double> cand(kCand);
  const double lo = domain_length / 50.0, hi = domain_length / 4.0;
  for (int i = 0; i < kCand; ++i)
    cand[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (kCand - 1));
  cand.front() = lo;
  cand.back() = hi;
  return cand;
}

SmoothConfig select_bandwidths(const SparseDataset& data, const EvalGrid& grid,
                               const KernelSpec& kernel, RunLog* log) {
  SmoothConfig cfg;
  cfg.kernel = kernel;
  cfg.bandwidth_mode = BandwidthMode::CrossValidated;
  const double len = data.domain.length();
  const int n = data.n_subjects();

  if (n < 20) {
    cfg.h_mu0 = len / 10.0;
    cfg.h_mu1 = 1.5 * cfg.h_mu0;
    cfg.h_cov0 = len / 10.0;
    cfg.h_cov1 = 1.5 * cfg.h_cov0;
    if (log)
      log->note("select_bandwidths: fewer than 20 subjects, using fixed defaults h=" +
                std::to_string(cfg.h_mu0));
    return cfg;
  }

  const std::vector<double> cand = bandwidth_candidates(len);

  // mean bandwidth: leave-one-subject-out prediction error
  Scatter1D pooled(pooled_obs(data));
  std::vector<std::vector<std::pair<double, double>>> subj_pts(n);
  for (int i = 0; i < n; ++i) {
    const auto& s = data.subjects[i];
    for (std::size_t j = 0; j < s.times.size(); ++j)
      subj_pts[i].emplace_back(s.times[j], s.values[j]);
  }
  double best_err = std::numeric_limits<double>::infinity();
  double best_h = cand.front();
  for (double h : cand) {
    double err = 0.0;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      for (const auto& [t, y] : subj_pts[i]) {
        try {
          const double m = pooled.fit(t, h, 1, 0, kernel, subj_pts[i], nullptr, "cv_mean");
          err += (y - m) * (y - m);
        } catch (const estimation_error&) {
          ok = false;
          break;
        }
      }
    }
    if (ok && err < best_err) {
      best_err = err;
      best_h = h;
    }
  }
  cfg.h_mu0 = best_h;
  cfg.h_mu1 = 1.5 * best_h;

  // covariance bandwidth: 5-fold subject-wise CV on raw covariances,
  // with the mean fixed at the selected level bandwidth
  Eigen::VectorXd mu_hat(grid.size());
  for (int i = 0; i < grid.size(); ++i)
    mu_hat(i) = pooled.fit(grid.t(i), cfg.h_mu0, 1, 0, kernel, {}, nullptr, "cv_mu");

  constexpr int kFolds = 5;
  struct HeldOut {
    double t, s, rc;
  };
  std::vector<std::vector<Pt2>> train_pts(kFolds);
  std::vector<std::vector<HeldOut>> held(kFolds);
  {
    std::vector<std::unordered_map<PairKey, Pt2, PairKeyHash>> agg(kFolds);
    std::vector<double> resid;
    for (int i = 0; i < n; ++i) {
      const auto& s = data.subjects[i];
      if (s.n_obs() < 2) continue;
      resid.resize(s.n_obs());
      for (int j = 0; j < s.n_obs(); ++j)
        resid[j] = s.values[j] - grid.interp(mu_hat, s.times[j]);
      const int fold = i % kFolds;
      for (int j = 0; j < s.n_obs(); ++j)
        for (int l = 0; l < s.n_obs(); ++l) {
          if (j == l) continue;
          const double rc = resid[j] * resid[l];
          held[fold].push_back({s.times[j], s.times[l], rc});
          for (int f = 0; f < kFolds; ++f) {
            if (f == fold) continue;
            PairKey key{s.times[j], s.times[l]};
            auto [it, ins] = agg[f].try_emplace(key, Pt2{key.t, key.s, 0, 0, 0});
            it->second.c += 1.0;
            it->second.sy += rc;
            it->second.syy += rc * rc;
          }
        }
    }
    for (int f = 0; f < kFolds; ++f) {
      train_pts[f].reserve(agg[f].size());
      for (auto& [k, v] : agg[f]) train_pts[f].push_back(v);
    }
  }
  std::vector<Scatter2D> train;
  train.reserve(kFolds);
  for (int f = 0; f < kFolds; ++f) train.emplace_back(std::move(train_pts[f]));

  best_err = std::numeric_limits<double>::infinity();
  best_h = cand.front();
  for (double h : cand) {
    double err = 0.0;
    bool ok = true;
    for (int f = 0; f < kFolds && ok; ++f) {
      for (const auto& p : held[f]) {
        try {
          const double g = train[f].fit(p.t, p.s, h, 0, kernel, nullptr, "cv_cov");
          err += (p.rc - g) * (p.rc - g);
        } catch (const estimation_error&) {
          ok = false;
          break;
        }
      }
    }
    if (ok && err < best_err) {
      best_err = err;
      best_h = h;
    }
  }
  cfg.h_cov0 = best_h;
  cfg.h_cov1 = 1.5 * best_h;
  return cfg;
}

MomentEstimates estimate_moments(const SparseDataset& data, const EvalGrid& grid,
                                 const SmoothConfig& cfg, RunLog* log) {
  SmoothConfig use = cfg;
  if (cfg.bandwidth_mode == BandwidthMode::CrossValidated) {
    use = select_bandwidths(data, grid, cfg.kernel, log);
    use.include_diagonal_pairs = cfg.include_diagonal_pairs;
  }
  use.validate(data.domain.length());
  MomentEstimates m;
  m.grid = grid;
  m.mu = smooth_mean(data, grid, use, 0, log);
  m.dmu = smooth_mean(data, grid, use, 1, log);
  m.cov = smooth_cov(data, grid, use, m.mu, 0, log);
  m.dcov = smooth_cov(data, grid, use, m.mu, 1, log);
  m.sigma2 = estimate_sigma2(data, grid, use, m.mu, m.cov, log);
  return m;
}

}  // namespace empdyn
