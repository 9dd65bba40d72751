#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

namespace empdyn {

struct Interval {
  double a = 0.0;
  double b = 1.0;
  double length() const { return b - a; }
  bool contains(double t) const { return t >= a && t <= b; }
};

// One subject's irregular observations, times sorted strictly ascending.
struct SubjectRecord {
  std::string id;
  std::vector<double> times;
  std::vector<double> values;
  int n_obs() const { return static_cast<int>(times.size()); }
};

// Sparse longitudinal sample on a common closed time domain.
struct SparseDataset {
  std::vector<SubjectRecord> subjects;
  Interval domain;

  int n_subjects() const { return static_cast<int>(subjects.size()); }
  long total_obs() const;

  // Enforces the structural invariants; throws config_error on violation.
  void validate() const;
};

struct LoadStats {
  long rows_read = 0;
  long rows_dropped_outside_domain = 0;
};

// CSV columns: subject_id,time,value. Header row optional, '#' starts a comment.
// Rows outside an explicit domain override are dropped and counted.
SparseDataset load_csv(const std::string& path,
                       std::optional<Interval> domain_override = std::nullopt,
                       LoadStats* stats = nullptr,
                       bool log_values = false);

void write_csv(const SparseDataset& data, const std::string& path,
               const std::string& meta = "");

// Uniform evaluation grid with trapezoid quadrature weights.
struct EvalGrid {
  Eigen::VectorXd t;
  Eigen::VectorXd w;

  int size() const { return static_cast<int>(t.size()); }
  double a() const { return t(0); }
  double b() const { return t(t.size() - 1); }

  // Linear interpolation of a grid function; x must lie in [a, b] (clamped).
  double interp(const Eigen::VectorXd& values, double x) const;
};

EvalGrid make_grid(Interval domain, int m);

}  // namespace empdyn
