#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "fmr/basis.hpp"
#include "fmr/errors.hpp"
#include "fmr/fosr.hpp"
#include "fmr/sim.hpp"

using fmr::CyclicBasis;
using fmr::FunctionalDataset;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = z(rng);
  return m;
}

Eigen::MatrixXd design_with_intercept(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Eigen::MatrixXd X = random_matrix(n, p, seed);
  X.col(0).setOnes();
  return X;
}

CyclicBasis unit_basis(int knots, const Eigen::VectorXd& grid) {
  return CyclicBasis(3, {0.0, 1.0}, knots, std::span<const double>(grid.data(), grid.size()));
}

FunctionalDataset make_data(Eigen::MatrixXd Y, Eigen::MatrixXd X, Eigen::VectorXd grid) {
  FunctionalDataset d;
  d.Y = std::move(Y);
  d.X = std::move(X);
  d.grid = std::move(grid);
  for (Eigen::Index p = 0; p < d.X.cols(); ++p) d.covariate_names.push_back("x" + std::to_string(p));
  return d;
}

}  // namespace

TEST_CASE("intercept-only OLS is the column mean") {
  const Eigen::MatrixXd Y = random_matrix(12, 7, 1);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(12, 1);
  const Eigen::MatrixXd B = fmr::pointwise_ols(Y, X);
  REQUIRE(B.rows() == 1);
  CHECK((B.row(0) - Y.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("noiseless linear model is recovered exactly") {
  const Eigen::MatrixXd X = design_with_intercept(30, 4, 2);
  const Eigen::MatrixXd B = random_matrix(4, 25, 3);
  const Eigen::MatrixXd fit = fmr::pointwise_ols(X * B, X);
  CHECK((fit - B).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pointwise OLS agrees with per-column regressions") {
  const Eigen::MatrixXd X = design_with_intercept(10, 4, 4);
  const Eigen::MatrixXd Y = random_matrix(10, 20, 5);
  const Eigen::MatrixXd fit = fmr::pointwise_ols(Y, X);
  for (Eigen::Index t = 0; t < 20; ++t) {
    // Normal equations by hand for this column only.
    const Eigen::VectorXd b = (X.transpose() * X).llt().solve(X.transpose() * Y.col(t));
    CHECK((fit.col(t) - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rank-deficient designs are rejected") {
  Eigen::MatrixXd X = design_with_intercept(10, 3, 6);
  X.col(2) = 2.0 * X.col(1);
  CHECK_THROWS_AS(fmr::ols_projector(X), fmr::RankDeficientError);
  CHECK_THROWS_AS(fmr::ols_projector(design_with_intercept(2, 3, 7)), fmr::RankDeficientError);
  const Eigen::MatrixXd Y = random_matrix(10, 5, 8);
  CHECK_THROWS_AS(fmr::pointwise_ols(Y, X), fmr::DataError);
}

TEST_CASE("zero-noise data with span coefficient functions") {
  const Eigen::VectorXd grid = fmr::simulation_grid(100);
  const CyclicBasis b = unit_basis(12, grid);
  const Eigen::MatrixXd coef = random_matrix(3, 12, 9);
  const Eigen::MatrixXd beta = coef * b.design().transpose();  // 3 x T
  const Eigen::MatrixXd X = design_with_intercept(40, 3, 10);
  const auto fit = fmr::fit_fosr(make_data(X * beta, X, grid), b);
  CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-3);
  CHECK((fit.beta_smooth - beta).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("doubling a covariate halves its coefficient row") {
  const Eigen::VectorXd grid = fmr::simulation_grid(96);
  const CyclicBasis b = unit_basis(20, grid);
  const Eigen::MatrixXd X = design_with_intercept(60, 3, 11);
  Eigen::MatrixXd Y = random_matrix(60, 96, 12);
  for (Eigen::Index t = 0; t < 96; ++t) Y.col(t) += X.col(1) * std::sin(2 * M_PI * grid[t]);
  const auto base = fmr::fit_fosr(make_data(Y, X, grid), b);
  Eigen::MatrixXd X2 = X;
  X2.col(1) *= 2.0;
  const auto doubled = fmr::fit_fosr(make_data(Y, X2, grid), b);
  CHECK((doubled.beta_raw.row(1) - 0.5 * base.beta_raw.row(1)).cwiseAbs().maxCoeff() < 1e-10);
  const double scale = base.beta_smooth.row(1).cwiseAbs().maxCoeff();
  CHECK((doubled.beta_smooth.row(1) - 0.5 * base.beta_smooth.row(1)).cwiseAbs().maxCoeff() < 1e-3 * scale);
  CHECK((doubled.beta_smooth.row(0) - base.beta_smooth.row(0)).cwiseAbs().maxCoeff() < 1e-3 * scale);
}

TEST_CASE("fixed-lambda fits are linear in the response") {
  const Eigen::VectorXd grid = fmr::simulation_grid(80);
  const CyclicBasis b = unit_basis(16, grid);
  const Eigen::MatrixXd X = design_with_intercept(25, 3, 13);
  const Eigen::MatrixXd Y1 = random_matrix(25, 80, 14);
  const Eigen::MatrixXd Y2 = random_matrix(25, 80, 15);
  const fmr::FoSROptions opt{0.01};
  const auto f1 = fmr::fit_fosr(make_data(Y1, X, grid), b, opt);
  const auto f2 = fmr::fit_fosr(make_data(Y2, X, grid), b, opt);
  const auto f12 = fmr::fit_fosr(make_data(Y1 + Y2, X, grid), b, opt);
  CHECK((f12.beta_smooth - f1.beta_smooth - f2.beta_smooth).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((f12.lambdas.array() == 0.01).all());
}

TEST_CASE("each coefficient row gets its own lambda") {
  const Eigen::VectorXd grid = fmr::simulation_grid(96);
  const CyclicBasis b = unit_basis(20, grid);
  const Eigen::MatrixXd X = design_with_intercept(80, 2, 16);
  Eigen::MatrixXd Y = 0.5 * random_matrix(80, 96, 17);
  for (Eigen::Index t = 0; t < 96; ++t) Y.col(t).array() += std::sin(6 * M_PI * grid[t]);
  const auto fit = fmr::fit_fosr(make_data(Y, X, grid), b);
  REQUIRE(fit.lambdas.size() == 2);
  // A rough intercept against a pure-noise slope: the slope is smoothed much harder.
  CHECK(fit.lambdas[1] > 10.0 * fit.lambdas[0]);
  CHECK((fit.residuals - (Y - X * fit.beta_smooth)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mismatched dataset dimensions are reported") {
  const Eigen::VectorXd grid = fmr::simulation_grid(50);
  const CyclicBasis b = unit_basis(10, grid);
  const Eigen::MatrixXd X = design_with_intercept(20, 2, 18);
  CHECK_THROWS_AS(fmr::fit_fosr(make_data(random_matrix(19, 50, 19), X, grid), b), fmr::DataError);
  CHECK_THROWS_AS(fmr::fit_fosr(make_data(random_matrix(20, 49, 20), X, grid), b), fmr::DataError);
}

TEST_CASE("intercept ISE shrinks from 100 to 1000 subjects") {
  const int K = 144;
  const Eigen::VectorXd grid = fmr::simulation_grid(K);
  const CyclicBasis b = unit_basis(40, grid);
  Eigen::VectorXd truth(K);
  for (int k = 0; k < K; ++k) truth[k] = fmr::true_fixed_effects(grid[k])[0];
  auto median_ise = [&](int N) {
    std::vector<double> v;
    for (int r = 0; r < 20; ++r) {
      fmr::DGPSpec spec;
      spec.N = N;
      spec.K = K;
      spec.seed = 500 + r;
      const auto sim = fmr::generate_dataset(spec);
      const auto fit = fmr::fit_fosr(sim.data, b);
      v.push_back(fmr::ise(fit.beta_smooth.row(0).transpose(), truth, grid));
    }
    std::nth_element(v.begin(), v.begin() + 10, v.end());
    const double hi = v[10];
    std::nth_element(v.begin(), v.begin() + 9, v.end());
    return 0.5 * (hi + v[9]);
  };
  const double small = median_ise(100), large = median_ise(1000);
  MESSAGE("median intercept ISE: N=100 " << small << ", N=1000 " << large);
  CHECK(large < small);
}
