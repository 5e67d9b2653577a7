#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "fmr/basis.hpp"
#include "fmr/errors.hpp"
#include "fmr/smooth.hpp"

using fmr::CyclicBasis;

namespace {

std::vector<double> day_grid(int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = 24.0 * i / n;
  return g;
}

CyclicBasis day_basis(int knots = 24, int points = 144) {
  return CyclicBasis(3, {0.0, 24.0}, knots, day_grid(points));
}

Eigen::VectorXd noisy_curve(const CyclicBasis& b, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::VectorXd y(b.grid().size());
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double s = b.grid()[t];
    y[t] = std::sin(2 * M_PI * s / 24) + 0.5 * std::cos(4 * M_PI * s / 24) + sd * z(rng);
  }
  return y;
}

// Dense restricted likelihood, straight from the mixed-model form: the penalized part of c
// is a random effect with variance sigma2 / lambda.
double oracle_reml(const Eigen::MatrixXd& D, const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y,
                   double lambda) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
  const double top = es.eigenvalues().maxCoeff();
  int rank = 0;
  double logdet_p = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    if (es.eigenvalues()[i] > 1e-10 * top) {
      ++rank;
      logdet_p += std::log(es.eigenvalues()[i]);
    }
  }
  const double n = static_cast<double>(D.rows());
  const double m = static_cast<double>(Y.cols());
  const double null_dim = static_cast<double>(P.rows() - rank);
  const Eigen::MatrixXd A = D.transpose() * D + lambda * P;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  const Eigen::MatrixXd C = ldlt.solve(D.transpose() * Y);
  const Eigen::MatrixXd R = Y - D * C;
  const double pen = R.squaredNorm() + lambda * (C.transpose() * P * C).trace();
  const double logdet_a = ldlt.vectorD().array().log().sum();
  return m * (n - null_dim) * std::log(pen) + m * (logdet_a - rank * std::log(lambda) - logdet_p);
}

double hat_trace_by_eigen(const Eigen::MatrixXd& D, const Eigen::MatrixXd& P, double lambda) {
  const Eigen::MatrixXd H = D * (D.transpose() * D + lambda * P).inverse() * D.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
  return es.eigenvalues().sum();
}

}  // namespace

TEST_CASE("lambda zero gives ordinary least squares") {
  const auto b = day_basis();
  const Eigen::VectorXd y = noisy_curve(b, 0.3, 1);
  const auto fit = fmr::penalized_fit(y, b.design(), b.penalty(), 0.0);
  const Eigen::VectorXd ols = b.design().colPivHouseholderQr().solve(y);
  CHECK((fit.coefficients - ols).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(fit.edf == doctest::Approx(24.0).epsilon(1e-8));
}

TEST_CASE("huge lambda collapses the fit to the mean") {
  const auto b = day_basis();
  const Eigen::VectorXd y = noisy_curve(b, 0.3, 2);
  const auto fit = fmr::penalized_fit(y, b.design(), b.penalty(), 1e12);
  CHECK((fit.fitted.array() - y.mean()).abs().maxCoeff() < 1e-6);
  CHECK(fit.edf == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("edf equals the hat trace from a dense eigendecomposition") {
  const auto b = day_basis(24, 144);
  const Eigen::VectorXd y = noisy_curve(b, 0.3, 3);
  for (double lambda : {1e-6, 1e-2, 0.7, 10.0, 1e3, 1e7}) {
    const auto fit = fmr::penalized_fit(y, b.design(), b.penalty(), lambda);
    CHECK(std::abs(fit.edf - hat_trace_by_eigen(b.design(), b.penalty(), lambda)) < 1e-6);
  }
}

TEST_CASE("edf falls and RSS rises as lambda grows") {
  const auto b = day_basis();
  const Eigen::VectorXd y = noisy_curve(b, 0.5, 4);
  double last_edf = 1e300, last_rss = -1.0;
  for (double lg = -8; lg <= 12; lg += 0.5) {
    const auto fit = fmr::penalized_fit(y, b.design(), b.penalty(), std::pow(10.0, lg));
    const double rss = (y - fit.fitted).squaredNorm();
    CHECK(fit.edf <= last_edf + 1e-9);
    CHECK(rss >= last_rss - 1e-9);
    CHECK(fit.edf >= 1.0 - 1e-6);
    CHECK(fit.edf <= 24.0 + 1e-6);
    last_edf = fit.edf;
    last_rss = rss;
  }
}

TEST_CASE("penalized fit rejects bad input") {
  const auto b = day_basis();
  const Eigen::VectorXd y = noisy_curve(b, 0.3, 5);
  CHECK_THROWS(fmr::penalized_fit(y, b.design(), b.penalty(), -1.0));
  // More coefficients than points: singular without a penalty.
  const CyclicBasis wide(3, {0.0, 24.0}, 24, day_grid(12));
  const Eigen::VectorXd short_y = Eigen::VectorXd::Ones(12);
  CHECK_THROWS_AS(fmr::penalized_fit(short_y, wide.design(), wide.penalty(), 0.0), fmr::NumericError);
  CHECK_NOTHROW(fmr::penalized_fit(short_y, wide.design(), wide.penalty(), 1.0));
}

TEST_CASE("REML criterion matches the dense oracle up to a constant") {
  const auto b = day_basis(12, 96);
  Eigen::MatrixXd Y(96, 3);
  for (int c = 0; c < 3; ++c) Y.col(c) = noisy_curve(b, 0.4, 10 + c);
  const fmr::RemlProblem problem(b.design(), b.penalty(), Y);
  const double offset = problem.criterion(0.0) - oracle_reml(b.design(), b.penalty(), Y, 1.0);
  for (double lg : {-4.0, -1.0, 0.5, 2.0, 5.0}) {
    const double ours = problem.criterion(lg);
    const double ref = oracle_reml(b.design(), b.penalty(), Y, std::pow(10.0, lg));
    CHECK(ours - offset == doctest::Approx(ref).epsilon(1e-8));
  }
}

TEST_CASE("REML optimum agrees with a 0.01 grid search") {
  const auto b = day_basis();
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const Eigen::VectorXd y = noisy_curve(b, 0.2 + 0.2 * (seed - 21), seed);
    const fmr::RemlProblem problem(b.design(), b.penalty(), y);
    double best = 0, best_value = 1e300;
    for (int i = 0; i <= 2000; ++i) {
      const double lg = -8.0 + 0.01 * i;
      const double v = oracle_reml(b.design(), b.penalty(), y, std::pow(10.0, lg));
      if (v < best_value) {
        best_value = v;
        best = lg;
      }
    }
    CHECK(std::abs(problem.select_log10_lambda() - best) <= 0.02);
  }
}

TEST_CASE("REML lambda does not depend on the scale of y") {
  const auto b = day_basis();
  const Eigen::VectorXd y = noisy_curve(b, 0.3, 31);
  const double base = std::log10(fmr::reml_lambda(y, b.design(), b.penalty()));
  for (double c : {-2.0, 0.001, 1000.0}) {
    const Eigen::VectorXd yc = c * y;
    CHECK(std::abs(std::log10(fmr::reml_lambda(yc, b.design(), b.penalty())) - base) < 1e-3);
  }
}

TEST_CASE("white noise is smoothed to few degrees of freedom") {
  const auto b = day_basis();
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::normal_distribution<double> z;
    Eigen::VectorXd y(144);
    for (auto& v : y) v = z(rng);
    const auto fit = fmr::smooth_fit(y, b);
    if (fit.edf <= 2.0 + 1.0) ++ok;
  }
  MESSAGE("white-noise trials with edf <= 3: " << ok);
  CHECK(ok >= 90);
}

TEST_CASE("smooth_curve leaves span functions alone") {
  const auto b = day_basis();
  std::mt19937_64 rng(41);
  std::normal_distribution<double> z;
  Eigen::VectorXd c(24);
  for (auto& v : c) v = z(rng);
  const Eigen::VectorXd y = b.design() * c;
  const Eigen::VectorXd out = fmr::smooth_curve(y, b);
  CHECK((out - y).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("constants pass through unchanged") {
  const auto b = day_basis();
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(144, 2.75);
  CHECK((fmr::smooth_curve(y, b).array() - 2.75).abs().maxCoeff() < 1e-8);
}

TEST_CASE("closed domain endpoints agree") {
  std::vector<double> g(101);
  for (int i = 0; i <= 100; ++i) g[i] = i / 100.0;
  const CyclicBasis b(3, {0.0, 1.0}, 10, g);
  std::mt19937_64 rng(51);
  std::normal_distribution<double> z;
  Eigen::VectorXd y(101);
  for (int i = 0; i <= 100; ++i) y[i] = g[i] + 0.1 * z(rng);
  const Eigen::VectorXd out = fmr::smooth_curve(y, b);
  CHECK(std::abs(out[0] - out[100]) < 1e-6);
}

TEST_CASE("smoothing a smoothed curve barely moves it") {
  const auto b = day_basis();
  const Eigen::VectorXd once = fmr::smooth_curve(noisy_curve(b, 0.5, 61), b);
  const Eigen::VectorXd twice = fmr::smooth_curve(once, b);
  CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("smoother matrix reproduces penalized fits") {
  const auto b = day_basis(12, 48);
  const Eigen::VectorXd y = noisy_curve(b, 0.3, 71);
  const Eigen::MatrixXd S = fmr::smoother_matrix(b.design(), b.penalty(), 3.0);
  const auto fit = fmr::penalized_fit(y, b.design(), b.penalty(), 3.0);
  CHECK((S * y - fit.fitted).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(S.trace() == doctest::Approx(fit.edf).epsilon(1e-10));
}

TEST_CASE("non-finite or misaligned input is rejected") {
  const auto b = day_basis();
  Eigen::VectorXd y = Eigen::VectorXd::Ones(144);
  y[3] = std::nan("");
  CHECK_THROWS_AS(fmr::smooth_curve(y, b), fmr::DataError);
  CHECK_THROWS_AS(fmr::smooth_curve(Eigen::VectorXd::Ones(10), b), fmr::DataError);
}
