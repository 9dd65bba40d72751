#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "empdyn/dataset.hpp"
#include "empdyn/dynamics.hpp"
#include "empdyn/smoothing.hpp"

namespace empdyn {

// Closed-form mean: polynomial plus optional cosine series in the
// normalized time (t - a) / (b - a).
struct MeanSpec {
  std::vector<double> poly;        // c0 + c1 t + c2 t^2 + ...
  std::vector<double> cos_coeffs;  // a_k cos(2 k pi tau), k = 1..

  double eval(double t, Interval dom) const;
  double eval_deriv(double t, Interval dom) const;
};

struct SamplingSpec {
  enum class Kind { Dense, Sparse };
  Kind kind = Kind::Sparse;
  int m_obs = 51;  // dense: shared equispaced design, endpoints included
  int n_min = 2;   // sparse: observation count uniform on {n_min..n_max},
  int n_max = 8;   //         times i.i.d. uniform on the domain
};

// Gaussian-process ground truth over the orthonormal cosine system
// sqrt(2/L) cos(2 k pi (t-a)/L), k = 1..K.
struct TruthSpec {
  MeanSpec mu;
  std::vector<double> lambdas;  // descending positive
  double sigma2 = 0.0;
  Interval domain{0.0, 1.0};
  SamplingSpec sampling;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedSample {
  SparseDataset data;
  Eigen::MatrixXd xi;  // n x K true scores
};

// Deterministic given spec.seed; subject i uses its own random stream.
SimulatedSample sample_dataset(const TruthSpec& spec, int n);

// Basis evaluations with exact constants.
double trig_phi(int k, double t, Interval dom);
double trig_dphi(int k, double t, Interval dom);

// Exact eigensystem and moment surfaces of a truth spec, for oracles.
EigenSystem exact_eigensystem(const std::vector<double>& lambdas, const EvalGrid& grid,
                              Interval dom);
MomentEstimates exact_moments(const TruthSpec& spec, const EvalGrid& grid);

enum class LambdaRule { PowerFour, Geometric };

// Closed-form coefficient of determination for the cosine system on [0,1],
// by direct summation; points where the derivative variance vanishes
// return 0.
Eigen::VectorXd analytic_r2(LambdaRule rule, int k_terms, const EvalGrid& grid);
Eigen::VectorXd analytic_r2(const std::vector<double>& lambdas, const EvalGrid& grid);

// Exact dynamic components of a truth spec by direct summation
// (independent of the estimation code path). The drift decomposition is
// left empty.
DynamicsEstimate analytic_dynamics(const TruthSpec& spec, const EvalGrid& grid,
                                   double floor_frac = 1e-6);

// Classical 4th-order one-step solve of
//   x'(t) = dmu(t) + beta(t) (x(t) - mu(t)) + z(t),  x(a) = x0,
// with all grid functions linearly interpolated between grid points.
// Returns the solution on the grid.
Eigen::VectorXd integrate_forward(double x0, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& z_path, const Eigen::VectorXd& mu,
                                  const Eigen::VectorXd& dmu, const EvalGrid& grid,
                                  int steps_per_cell);

}  // namespace empdyn
