#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "empdyn/eigenbasis.hpp"
#include "empdyn/errors.hpp"
#include "empdyn/simulate.hpp"

using namespace empdyn;

namespace {

Eigen::MatrixXd trig_kernel(const std::vector<double>& lambdas, const EvalGrid& grid) {
  EigenSystem eig = exact_eigensystem(lambdas, grid, {grid.a(), grid.b()});
  return eig.phi * eig.lambda.asDiagonal() * eig.phi.transpose();
}

double quad_inner(const EvalGrid& g, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (g.w.array() * a.array() * b.array()).sum();
}

}  // namespace

TEST_CASE("rank-one cosine kernel is recovered exactly") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  Eigen::MatrixXd cov = trig_kernel({1.0}, grid);
  EigenSystem eig = eigendecompose(cov, grid);
  REQUIRE(eig.K == 1);
  CHECK(eig.lambda(0) == doctest::Approx(1.0).epsilon(0.01));
  Eigen::VectorXd truth(grid.size());
  for (int i = 0; i < grid.size(); ++i)
    truth(i) = std::sqrt(2.0) * std::cos(2.0 * M_PI * grid.t(i));
  const double sign = quad_inner(grid, eig.phi.col(0), truth) >= 0 ? 1.0 : -1.0;
  CHECK((sign * eig.phi.col(0) - truth).cwiseAbs().maxCoeff() < 0.01 * std::sqrt(2.0));
}

TEST_CASE("three-component cosine kernel: eigenvalues and orthonormality") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  const std::vector<double> lambdas{1.0, 1.0 / 16.0, 1.0 / 81.0};
  Eigen::MatrixXd cov = trig_kernel(lambdas, grid);
  EigenSystem eig = eigendecompose(cov, grid, {1.0, 20});
  REQUIRE(eig.K >= 3);
  for (int k = 0; k < 3; ++k)
    CHECK(eig.lambda(k) == doctest::Approx(lambdas[k]).epsilon(0.01));
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(quad_inner(grid, eig.phi.col(j), eig.phi.col(k)) -
                     (j == k ? 1.0 : 0.0)) <= 1e-8);
  for (int k = 1; k < eig.K; ++k) CHECK(eig.lambda(k) <= eig.lambda(k - 1));
}

TEST_CASE("default truncation keeps the smallest count reaching the threshold") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  const std::vector<double> lambdas{1.0, 1.0 / 16.0, 1.0 / 81.0};
  EigenSystem eig = eigendecompose(trig_kernel(lambdas, grid), grid, {0.95, 20});
  // cumulative shares: 0.930, 0.989, 1.0
  CHECK(eig.K == 2);
  CHECK(eig.fve(0) == doctest::Approx(0.930366).epsilon(1e-3));
  CHECK(eig.fve(1) >= 0.95);
  EigenSystem capped = eigendecompose(trig_kernel(lambdas, grid), grid, {0.999, 1});
  CHECK(capped.K == 1);
}

TEST_CASE("zero and non-symmetric inputs are rejected") {
  EvalGrid grid = make_grid({0.0, 1.0}, 21);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(21, 21);
  CHECK_THROWS_AS(eigendecompose(zero, grid), estimation_error);
  Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(21, 21);
  skew(0, 1) = 1.0;
  CHECK_THROWS_AS(eigendecompose(skew, grid), config_error);
}

TEST_CASE("near-tied eigenvalues produce a warning, not an error") {
  EvalGrid grid = make_grid({0.0, 1.0}, 51);
  EigenSystem basis = exact_eigensystem({1.0, 1.0}, grid, {0.0, 1.0});
  Eigen::MatrixXd cov = basis.phi * basis.phi.transpose();
  RunLog log;
  EigenSystem eig = eigendecompose(cov, grid, {1.0, 20}, &log);
  CHECK(eig.K >= 2);
  bool found = false;
  for (const auto& n : log.notes)
    if (n.find("near-tied") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("eigenfunction derivatives match the analytic derivative") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  EigenSystem basis = exact_eigensystem({1.0}, grid, {0.0, 1.0});
  Eigen::MatrixXd cov = basis.phi * basis.lambda.asDiagonal() * basis.phi.transpose();
  Eigen::MatrixXd dcov = basis.dphi * basis.lambda.asDiagonal() * basis.phi.transpose();

  EigenSystem eig = eigendecompose(cov, grid);
  eig.dphi = eigenfunction_derivatives(dcov, eig);
  REQUIRE(eig.K == 1);
  const double sign = quad_inner(grid, eig.phi.col(0), basis.phi.col(0)) >= 0 ? 1.0 : -1.0;
  double sup = 0.0;
  const double scale = 2.0 * std::sqrt(2.0) * M_PI;
  for (int i = 0; i < grid.size(); ++i) {
    if (grid.t(i) < 0.1 || grid.t(i) > 0.9) continue;
    const double truth = -scale * std::sin(2.0 * M_PI * grid.t(i));
    sup = std::max(sup, std::abs(sign * eig.dphi(i, 0) - truth));
  }
  CHECK(sup < 0.05 * scale);
}

TEST_CASE("zero derivative surface gives zero derivative functions") {
  EvalGrid grid = make_grid({0.0, 1.0}, 41);
  EigenSystem eig = eigendecompose(trig_kernel({1.0, 0.25}, grid), grid, {1.0, 20});
  Eigen::MatrixXd dphi = eigenfunction_derivatives(Eigen::MatrixXd::Zero(41, 41), eig);
  CHECK(dphi.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("integrating the derivative recovers the eigenfunction") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  EigenSystem basis = exact_eigensystem({1.0, 0.25}, grid, {0.0, 1.0});
  Eigen::MatrixXd cov = basis.phi * basis.lambda.asDiagonal() * basis.phi.transpose();
  Eigen::MatrixXd dcov = basis.dphi * basis.lambda.asDiagonal() * basis.phi.transpose();
  EigenSystem eig = eigendecompose(cov, grid, {1.0, 2});
  eig.dphi = eigenfunction_derivatives(dcov, eig);
  for (int k = 0; k < 2; ++k) {
    double acc = eig.phi(0, k);
    double sup = 0.0;
    for (int i = 1; i < grid.size(); ++i) {
      const double h = grid.t(i) - grid.t(i - 1);
      acc += 0.5 * h * (eig.dphi(i - 1, k) + eig.dphi(i, k));
      sup = std::max(sup, std::abs(acc - eig.phi(i, k)));
    }
    CHECK(sup < 0.02 * eig.phi.col(k).cwiseAbs().maxCoeff());
  }
}

TEST_CASE("derivative covariance: single term, symmetry, diagonal oracle") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  EigenSystem basis = exact_eigensystem({1.0, 1.0 / 16.0, 1.0 / 81.0}, grid, {0.0, 1.0});
  Eigen::MatrixXd cov = basis.phi * basis.lambda.asDiagonal() * basis.phi.transpose();
  Eigen::MatrixXd dcov = basis.dphi * basis.lambda.asDiagonal() * basis.phi.transpose();
  EigenSystem eig = eigendecompose(cov, grid, {1.0, 3});
  eig.dphi = eigenfunction_derivatives(dcov, eig);
  REQUIRE(eig.K == 3);

  Eigen::MatrixXd d11 = derivative_covariance(eig);
  CHECK((d11 - d11.transpose()).cwiseAbs().maxCoeff() == 0.0);

  // direct-summation oracle for the diagonal
  for (int i = 0; i < grid.size(); ++i) {
    double direct = 0.0;
    for (int k = 0; k < 3; ++k) direct += eig.lambda(k) * eig.dphi(i, k) * eig.dphi(i, k);
    CHECK(std::abs(d11(i, i) - direct) <= 1e-10);
  }

  // a single component gives a rank-one outer product
  EigenSystem one = eigendecompose(trig_kernel({1.0}, grid), grid);
  one.dphi = eigenfunction_derivatives(
      exact_eigensystem({1.0}, grid, {0.0, 1.0}).dphi *
          exact_eigensystem({1.0}, grid, {0.0, 1.0}).phi.transpose(),
      one);
  Eigen::MatrixXd r1 = derivative_covariance(one);
  for (int i = 0; i < grid.size(); i += 10)
    for (int j = 0; j < grid.size(); j += 10)
      CHECK(r1(i, j) ==
            doctest::Approx(one.lambda(0) * one.dphi(i, 0) * one.dphi(j, 0)).epsilon(1e-10));
}

TEST_CASE("direct decomposition of the derivative covariance") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  EigenSystem basis = exact_eigensystem({1.0}, grid, {0.0, 1.0});
  Eigen::MatrixXd d11 = basis.dphi * basis.lambda.asDiagonal() * basis.dphi.transpose();
  EigenSystem kl = kl_of_derivative(d11, grid, {1.0, 20});
  REQUIRE(kl.K >= 1);
  const double norm2 = quad_inner(grid, basis.dphi.col(0), basis.dphi.col(0));
  CHECK(kl.lambda(0) == doctest::Approx(basis.lambda(0) * norm2).epsilon(0.01));
  Eigen::VectorXd normalized = basis.dphi.col(0) / std::sqrt(norm2);
  const double sign = quad_inner(grid, kl.phi.col(0), normalized) >= 0 ? 1.0 : -1.0;
  CHECK((sign * kl.phi.col(0) - normalized).cwiseAbs().maxCoeff() < 0.02);

  double trace = 0.0;
  for (int i = 0; i < grid.size(); ++i) trace += grid.w(i) * d11(i, i);
  CHECK(kl.lambda.sum() == doctest::Approx(trace).epsilon(1e-8));

  CHECK_THROWS_AS(kl_of_derivative(Eigen::MatrixXd::Zero(101, 101), grid), estimation_error);
}

TEST_CASE("kept components reconstruct the surface within the discarded share") {
  EvalGrid grid = make_grid({0.0, 1.0}, 101);
  const std::vector<double> lambdas{1.0, 1.0 / 16.0, 1.0 / 81.0};
  Eigen::MatrixXd cov = trig_kernel(lambdas, grid);
  EigenSystem eig = eigendecompose(cov, grid, {0.95, 20});
  REQUIRE(eig.K == 2);
  Eigen::MatrixXd recon = eig.phi * eig.lambda.asDiagonal() * eig.phi.transpose();
  double werr = 0.0;
  for (int i = 0; i < grid.size(); ++i)
    for (int j = 0; j < grid.size(); ++j) {
      const double d = cov(i, j) - recon(i, j);
      werr += grid.w(i) * grid.w(j) * d * d;
    }
  const double bound = (1.0 - eig.fve(eig.K - 1)) * eig.total_variance + 1e-8;
  CHECK(std::sqrt(werr) <= bound);
}

TEST_CASE("repeated runs are bit-identical") {
  EvalGrid grid = make_grid({0.0, 1.0}, 81);
  Eigen::MatrixXd cov = trig_kernel({1.0, 0.3, 0.05}, grid);
  EigenSystem a = eigendecompose(cov, grid, {1.0, 20});
  EigenSystem b = eigendecompose(cov, grid, {1.0, 20});
  CHECK((a.phi - b.phi).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.lambda - b.lambda).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("derivative accuracy improves with grid refinement") {
  // rank-one kernel from a non-harmonic smooth function, where the
  // quadrature error dominates and should shrink with the grid step
  auto run = [](int m) {
    EvalGrid grid = make_grid({0.0, 1.0}, m);
    Eigen::VectorXd f(m);
    for (int i = 0; i < m; ++i) f(i) = std::exp(grid.t(i));
    Eigen::MatrixXd cov = f * f.transpose();
    Eigen::MatrixXd dcov = cov;  // d/dt exp(t) = exp(t)
    EigenSystem eig = eigendecompose(cov, grid);
    eig.dphi = eigenfunction_derivatives(dcov, eig);
    const double l2 = std::sqrt((std::exp(2.0) - 1.0) / 2.0);
    double sup = 0.0;
    for (int i = 0; i < m; ++i)
      sup = std::max(sup, std::abs(eig.dphi(i, 0) - std::exp(grid.t(i)) / l2));
    return sup;
  };
  const double coarse = run(51);
  const double fine = run(201);
  CHECK(fine < coarse / 4.0);
}
