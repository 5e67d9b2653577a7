#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "fmr/errors.hpp"
#include "fmr/pipeline.hpp"
#include "fmr/sim.hpp"
#include "fmr/surface.hpp"

using fmr::MomentModel;

namespace {

constexpr int kJ = 4;
constexpr int kT = 24;

Eigen::VectorXd unit_grid(int T) {
  Eigen::VectorXd g(T);
  for (int t = 0; t < T; ++t) g[t] = static_cast<double>(t) / T;
  return g;
}

Eigen::MatrixXd random_correlation(int J, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd A(J, J + 2);
  for (int i = 0; i < J; ++i)
    for (int k = 0; k < J + 2; ++k) A(i, k) = z(rng);
  Eigen::MatrixXd S = A * A.transpose();
  const Eigen::VectorXd d = S.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * S * d.asDiagonal();
}

// Random model on kT points with covariates (1, x).
MomentModel random_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const Eigen::VectorXd grid = unit_grid(kT);
  MomentModel m;
  m.basis = fmr::CyclicBasis(3, {0.0, 1.0}, kJ, std::span<const double>(grid.data(), grid.size()));
  m.beta = Eigen::MatrixXd::Zero(2, kT);
  m.sigma2_eps = Eigen::VectorXd::Constant(kT, 0.2);
  for (int t = 0; t < kT; ++t) m.sigma2_eps[t] += 0.1 * std::sin(2 * M_PI * grid[t]);
  m.variance.gamma.resize(2, kJ);
  for (int j = 0; j < kJ; ++j) m.variance.gamma.col(j) << 0.5 * z(rng), 0.3 * z(rng);
  m.correlation.C = random_correlation(kJ, rng);
  m.third.triples = fmr::sorted_tuples<3>(kJ);
  m.third.delta.resize(2, static_cast<Eigen::Index>(m.third.triples.size()));
  for (Eigen::Index t = 0; t < m.third.delta.cols(); ++t) m.third.delta.col(t) << 0.4 * z(rng), 0.1 * z(rng);
  m.fourth.quads = fmr::sorted_tuples<4>(kJ);
  const auto nq = static_cast<Eigen::Index>(m.fourth.quads.size());
  m.fourth.eta.resize(2, nq);
  m.fourth.log_link.resize(static_cast<std::size_t>(nq));
  for (Eigen::Index q = 0; q < nq; ++q) {
    m.fourth.log_link[static_cast<std::size_t>(q)] = fmr::even_multiplicity(m.fourth.quads[static_cast<std::size_t>(q)].idx);
    m.fourth.eta.col(q) << 0.5 * z(rng), 0.1 * z(rng);
  }
  return m;
}

Eigen::VectorXd probe(double x) { return Eigen::Vector2d(1.0, x); }

// Ordered-index sums, written out directly from the moment definitions.
double brute_skewness(const MomentModel& m, const Eigen::VectorXd& x, int s) {
  const Eigen::RowVectorXd phi = m.basis.design().row(s);
  double num = 0.0;
  for (int a = 0; a < kJ; ++a)
    for (int b = 0; b < kJ; ++b)
      for (int c = 0; c < kJ; ++c) {
        std::array<int, 3> k{a, b, c};
        std::sort(k.begin(), k.end());
        std::size_t t = 0;
        while (m.third.triples[t].idx != k) ++t;
        const double g = x.dot(m.variance.gamma.col(a) + m.variance.gamma.col(b) + m.variance.gamma.col(c));
        num += phi[a] * phi[b] * phi[c] * x.dot(m.third.delta.col(static_cast<Eigen::Index>(t))) * std::exp(g / 2);
      }
  double var = m.sigma2_eps[s];
  for (int a = 0; a < kJ; ++a)
    for (int b = 0; b < kJ; ++b)
      var += phi[a] * phi[b] * m.correlation.C(a, b) *
             std::exp(x.dot(m.variance.gamma.col(a) + m.variance.gamma.col(b)) / 2);
  return num / std::pow(var, 1.5);
}

double brute_kurtosis(const MomentModel& m, const Eigen::VectorXd& x, int s) {
  const Eigen::RowVectorXd phi = m.basis.design().row(s);
  double K = 0.0;
  for (int a = 0; a < kJ; ++a)
    for (int b = 0; b < kJ; ++b)
      for (int c = 0; c < kJ; ++c)
        for (int d = 0; d < kJ; ++d) {
          std::array<int, 4> k{a, b, c, d};
          std::sort(k.begin(), k.end());
          std::size_t q = 0;
          while (m.fourth.quads[q].idx != k) ++q;
          const double lin = x.dot(m.fourth.eta.col(static_cast<Eigen::Index>(q)));
          const double u = m.fourth.log_link[q] ? std::exp(lin) : lin;
          const double g = x.dot(m.variance.gamma.col(a) + m.variance.gamma.col(b) +
                                 m.variance.gamma.col(c) + m.variance.gamma.col(d));
          K += phi[a] * phi[b] * phi[c] * phi[d] * u * std::exp(g / 2);
        }
  double vb = 0.0;
  for (int a = 0; a < kJ; ++a)
    for (int b = 0; b < kJ; ++b)
      vb += phi[a] * phi[b] * m.correlation.C(a, b) *
            std::exp(x.dot(m.variance.gamma.col(a) + m.variance.gamma.col(b)) / 2);
  const double s2 = m.sigma2_eps[s];
  return (K + 3 * s2 * s2 + 6 * s2 * vb) / std::pow(vb + s2, 2) - 3.0;
}

}  // namespace

TEST_CASE("covariance is symmetric and matches the matrix form") {
  const MomentModel m = random_model(1);
  const Eigen::VectorXd x = probe(0.7);
  const Eigen::MatrixXd S = fmr::covariance_matrix(m, x);
  for (int a = 0; a < kT; ++a)
    for (int b = 0; b < kT; ++b) {
      CHECK(fmr::conditional_covariance(m, x, a, b) == doctest::Approx(fmr::conditional_covariance(m, x, b, a)).epsilon(1e-14));
      CHECK(S(a, b) == doctest::Approx(fmr::conditional_covariance(m, x, a, b)).epsilon(1e-12));
    }
  CHECK((fmr::variance_curve(m, x) - S.diagonal()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity correlation and zero gamma collapse to squared basis values") {
  MomentModel m = random_model(2);
  m.variance.gamma.setZero();
  m.correlation.C = Eigen::MatrixXd::Identity(kJ, kJ);
  const Eigen::VectorXd x = probe(-3.0);
  for (int s = 0; s < kT; ++s)
    CHECK(fmr::conditional_covariance(m, x, s, s) ==
          doctest::Approx(m.basis.design().row(s).squaredNorm() + m.sigma2_eps[s]).epsilon(1e-13));
}

TEST_CASE("covariance matrices are PSD at random probes") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int r = 0; r < 5; ++r) {
    const MomentModel m = random_model(30 + r);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fmr::covariance_matrix(m, probe(u(rng))));
    CHECK(es.eigenvalues().minCoeff() >= -1e-6);
  }
}

TEST_CASE("correlation is one on the diagonal and bounded elsewhere") {
  const MomentModel m = random_model(4);
  for (double xv : {-2.0, 0.0, 1.5}) {
    const Eigen::VectorXd x = probe(xv);
    for (int a = 0; a < kT; ++a) {
      CHECK(fmr::conditional_correlation(m, x, a, a) == 1.0);
      for (int b = 0; b < kT; ++b) CHECK(std::abs(fmr::conditional_correlation(m, x, a, b)) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("lag correlation wraps around the domain") {
  const MomentModel m = random_model(5);
  const Eigen::VectorXd x = probe(0.2);
  const double step = 1.0 / kT;
  for (int s = 0; s < kT; ++s) {
    CHECK(fmr::lag_correlation(m, x, s, 1.0) == 1.0);
    CHECK(fmr::lag_correlation(m, x, s, 3 * step) ==
          doctest::Approx(fmr::conditional_correlation(m, x, s, (s + 3) % kT)).epsilon(1e-14));
  }
  const Eigen::VectorXd curve = fmr::lag_correlation_curve(m, x, 5 * step);
  for (int s = 0; s < kT; ++s) CHECK(curve[s] == doctest::Approx(fmr::lag_correlation(m, x, s, 5 * step)));
  CHECK_THROWS_AS(fmr::lag_correlation(m, x, 0, 0.4 * step), fmr::DataError);
}

TEST_CASE("zero variance is a numeric error") {
  MomentModel m = random_model(6);
  m.variance.gamma.row(0).setConstant(-800.0);  // exp underflows to zero
  m.sigma2_eps.setZero();
  const Eigen::VectorXd x = probe(0.0);
  CHECK_THROWS_AS(fmr::conditional_correlation(m, x, 0, 1), fmr::NumericError);
  CHECK_THROWS_AS(fmr::conditional_skewness(m, x, 0), fmr::NumericError);
  CHECK_THROWS_AS(fmr::conditional_kurtosis(m, x, 0), fmr::NumericError);
  CHECK_THROWS_AS(fmr::variance_ratio(m, probe(0.0), x, 0), fmr::NumericError);
  CHECK_THROWS_AS(fmr::conditional_covariance(m, Eigen::VectorXd::Ones(3), 0, 0), fmr::DataError);
}

TEST_CASE("sorted-tuple skewness and kurtosis equal ordered brute-force sums") {
  const MomentModel m = random_model(7);
  for (double xv : {-1.0, 0.3, 2.0}) {
    const Eigen::VectorXd x = probe(xv);
    for (int s = 0; s < kT; ++s) {
      CHECK(std::abs(fmr::conditional_skewness(m, x, s) - brute_skewness(m, x, s)) < 1e-9);
      CHECK(std::abs(fmr::conditional_kurtosis(m, x, s) - brute_kurtosis(m, x, s)) < 1e-9);
    }
  }
}

TEST_CASE("zero third moments give zero skewness") {
  MomentModel m = random_model(8);
  m.third.delta.setZero();
  CHECK(fmr::skewness_curve(m, probe(1.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise-only model has Gaussian kurtosis") {
  MomentModel m = random_model(9);
  m.variance.gamma.row(0).setConstant(-200.0);
  m.variance.gamma.row(1).setZero();
  CHECK(fmr::kurtosis_curve(m, probe(0.5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Isserlis fourth moments give zero excess kurtosis") {
  MomentModel m = random_model(10);
  const Eigen::MatrixXd& C = m.correlation.C;
  for (std::size_t q = 0; q < m.fourth.quads.size(); ++q) {
    const auto& i = m.fourth.quads[q].idx;
    const double v = C(i[0], i[1]) * C(i[2], i[3]) + C(i[0], i[2]) * C(i[1], i[3]) + C(i[0], i[3]) * C(i[1], i[2]);
    auto col = m.fourth.eta.col(static_cast<Eigen::Index>(q));
    col.setZero();
    col[0] = m.fourth.log_link[q] ? std::log(v) : v;
  }
  for (double xv : {-2.0, 0.0, 3.0}) {
    CHECK(fmr::kurtosis_curve(m, probe(xv)).cwiseAbs().maxCoeff() < 1e-9);
    m.sigma2_eps.setZero();
    CHECK(fmr::kurtosis_curve(m, probe(xv)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("variance ratio identities") {
  const MomentModel m = random_model(11);
  const Eigen::VectorXd a = probe(-1.0), b = probe(2.0);
  for (int s = 0; s < kT; ++s) {
    CHECK(fmr::variance_ratio(m, a, a, s) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fmr::variance_ratio(m, a, b, s) * fmr::variance_ratio(m, b, a, s) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Eigen::VectorXd curve = fmr::variance_ratio_curve(m, a, b);
  for (int s = 0; s < kT; ++s) CHECK(curve[s] == doctest::Approx(fmr::variance_ratio(m, a, b, s)));
}

TEST_CASE("variance ratio under identity correlation and no noise") {
  MomentModel m = random_model(12);
  m.correlation.C = Eigen::MatrixXd::Identity(kJ, kJ);
  m.sigma2_eps.setZero();
  const Eigen::VectorXd a = probe(1.5), b = probe(-0.5);
  for (int s = 0; s < kT; ++s) {
    double num = 0, den = 0;
    for (int j = 0; j < kJ; ++j) {
      const double p2 = std::pow(m.basis.design()(s, j), 2);
      num += p2 * std::exp(a.dot(m.variance.gamma.col(j)));
      den += p2 * std::exp(b.dot(m.variance.gamma.col(j)));
    }
    CHECK(fmr::variance_ratio(m, a, b, s) == doctest::Approx(num / den).epsilon(1e-12));
  }
}

TEST_CASE("Gaussian-score covariance matches a million simulated curves") {
  const Eigen::VectorXd grid = fmr::simulation_grid(144);
  const MomentModel truth = fmr::true_moment_model(grid, fmr::ScoreLaw::Gaussian);
  const Eigen::Vector4d x(1.0, 10.0, 1.0, 0.0);
  const std::array<std::pair<int, int>, 5> pairs{{{0, 0}, {10, 30}, {50, 51}, {71, 140}, {143, 100}}};
  const int n = 1000000;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;
  const Eigen::MatrixXd& phi = truth.basis.design();
  std::array<double, 5> s1{}, s2{}, sp{}, spp{};
  std::array<double, 5> m1{}, m2{};
  for (int r = 0; r < n; ++r) {
    const Eigen::VectorXd xi = fmr::generate_scores(x.tail(3), rng, fmr::ScoreLaw::Gaussian);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [a, b] = pairs[k];
      double ya = phi.row(a).dot(xi), yb = phi.row(b).dot(xi);
      const double ea = std::sqrt(truth.sigma2_eps[a]) * z(rng);
      ya += ea;
      yb += a == b ? ea : std::sqrt(truth.sigma2_eps[b]) * z(rng);
      m1[k] += ya;
      m2[k] += yb;
      s1[k] += ya * ya;
      s2[k] += yb * yb;
      sp[k] += ya * yb;
      spp[k] += ya * yb * ya * yb;
    }
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [a, b] = pairs[k];
    const double ma = m1[k] / n, mb = m2[k] / n;
    const double cov = sp[k] / n - ma * mb;
    // Mean-zero curves: the product's spread sets the error of its mean.
    const double se = std::sqrt((spp[k] / n - std::pow(sp[k] / n, 2)) / (n - 1));
    const double closed = fmr::conditional_covariance(truth, x, a, b);
    INFO("pair " << a << "," << b << " closed " << closed << " simulated " << cov << " se " << se);
    CHECK(std::abs(cov - closed) < 3.0 * se);
  }
}

TEST_CASE("skewness survives affine changes of the response") {
  fmr::DGPSpec spec;
  spec.N = 200;
  spec.K = 48;
  spec.seed = 99;
  const auto sim = fmr::generate_dataset(spec);
  fmr::PipelineConfig cfg;
  cfg.smooth_knots = 12;
  const fmr::Pipeline pipe(cfg, sim.data.grid);
  const auto base = pipe.fit(sim.data);
  auto shifted = sim.data;
  shifted.Y = 3.0 * shifted.Y.array() + 5.0;
  const auto other = pipe.fit(shifted);
  for (const Eigen::VectorXd& x : fmr::default_probes()) {
    const Eigen::VectorXd a = fmr::skewness_curve(base.model, x), b = fmr::skewness_curve(other.model, x);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    const Eigen::VectorXd ka = fmr::kurtosis_curve(base.model, x), kb = fmr::kurtosis_curve(other.model, x);
    CHECK((ka - kb).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, ka.cwiseAbs().maxCoeff()));
    const Eigen::VectorXd va = fmr::variance_curve(base.model, x), vb = fmr::variance_curve(other.model, x);
    CHECK((vb - 9.0 * va).cwiseAbs().maxCoeff() < 1e-5 * vb.maxCoeff());
  }
}

TEST_CASE("fitted surfaces stay inside their bounds") {
  fmr::DGPSpec spec;
  spec.N = 300;
  spec.K = 48;
  spec.seed = 5;
  const auto sim = fmr::generate_dataset(spec);
  fmr::PipelineConfig cfg;
  cfg.smooth_knots = 12;
  cfg.eigenmodel = true;
  const fmr::Pipeline pipe(cfg, sim.data.grid);
  const auto fit = pipe.fit(sim.data);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-30, 30);
  std::bernoulli_distribution coin(0.5);
  for (int r = 0; r < 5; ++r) {
    const Eigen::Vector4d x(1.0, u(rng), coin(rng) ? 1.0 : 0.0, coin(rng) ? 1.0 : 0.0);
    const Eigen::MatrixXd S = fmr::covariance_matrix(fit.model, x);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    CHECK(es.eigenvalues().minCoeff() >= -1e-6);
    CHECK(fmr::variance_curve(fit.model, x).minCoeff() > 0.0);
    const Eigen::VectorXd rho = fmr::lag_correlation_curve(fit.model, x, 0.25);
    CHECK(rho.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
  }
}
