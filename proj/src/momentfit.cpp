#include "fmr/momentfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fmr/errors.hpp"
#include "fmr/fosr.hpp"

namespace fmr {
namespace {

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] > 0) d += y[i] * std::log(y[i] / mu[i]);
    d -= y[i] - mu[i];
  }
  return 2.0 * d;
}

// Weighted LS with the response already multiplied by sqrt(w). When the weights vanish on a
// subgroup (a fit pinned at the floor) the weighted design loses rank; the step from `current`
// is then the minimum-norm one, which leaves the unidentified direction where it was.
Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs,
                                       const Eigen::VectorXd* current = nullptr) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (qr.rank() == A.cols()) return qr.solve(rhs);
  if (!current) throw NumericError("IRLS weighted design lost rank");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-10);
  cod.compute(A);
  return *current + cod.solve(rhs - A * *current);
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

template <std::size_t K>
double tuple_multiplicity(const std::array<int, K>& idx) {
  double denom = 1.0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= K; ++i) {
    if (i < K && idx[i] == idx[i - 1]) {
      ++run;
    } else {
      denom *= factorial(static_cast<int>(run));
      run = 1;
    }
  }
  return factorial(static_cast<int>(K)) / denom;
}

template <std::size_t K>
void enumerate(int J, std::size_t pos, int start, std::array<int, K>& cur,
               std::vector<SortedTuple<K>>& out) {
  if (pos == K) {
    out.push_back({cur, tuple_multiplicity(cur)});
    return;
  }
  for (int j = start; j < J; ++j) {
    cur[pos] = j;
    enumerate<K>(J, pos + 1, j, cur, out);
  }
}

template <std::size_t K>
Eigen::MatrixXd product_responses(const Eigen::MatrixXd& xi_star,
                                  const std::vector<SortedTuple<K>>& tuples) {
  Eigen::MatrixXd out(xi_star.rows(), static_cast<Eigen::Index>(tuples.size()));
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    Eigen::VectorXd prod = Eigen::VectorXd::Ones(xi_star.rows());
    for (int j : tuples[t].idx) prod.array() *= xi_star.col(j).array();
    out.col(static_cast<Eigen::Index>(t)) = prod;
  }
  if (!out.allFinite() || out.cwiseAbs().maxCoeff() > kMaxProductMagnitude)
    throw DataError("scaled-score cross product exceeds magnitude " +
                    std::to_string(kMaxProductMagnitude));
  return out;
}

}  // namespace

template <std::size_t K>
std::vector<SortedTuple<K>> sorted_tuples(int J) {
  std::vector<SortedTuple<K>> out;
  std::array<int, K> cur{};
  enumerate<K>(J, 0, 0, cur, out);
  return out;
}

template std::vector<SortedTuple<2>> sorted_tuples<2>(int);
template std::vector<SortedTuple<3>> sorted_tuples<3>(int);
template std::vector<SortedTuple<4>> sorted_tuples<4>(int);

bool even_multiplicity(const std::array<int, 4>& q) {
  // Sorted, so equal indices are adjacent.
  std::size_t i = 0;
  while (i < q.size()) {
    std::size_t run = 1;
    while (i + run < q.size() && q[i + run] == q[i]) ++run;
    if (run % 2 != 0) return false;
    i += run;
  }
  return true;
}

Eigen::VectorXd VarianceModel::half_scale(const Eigen::VectorXd& x) const {
  return (0.5 * (gamma.transpose() * x)).array().exp();
}

Eigen::MatrixXd CorrelationEigenmodel::at(const Eigen::VectorXd& x) const {
  const Eigen::Index J = U.cols();
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(J);
  for (Eigen::Index j = 0; j < J; ++j)
    if (active[static_cast<std::size_t>(j)]) weight[j] = std::exp(coefficients.col(j).dot(x));
  return U * weight.asDiagonal() * U.transpose();
}

Eigen::MatrixXd CorrelationModel::at(const Eigen::VectorXd& x) const {
  return eigen ? eigen->at(x) : C;
}

double FourthMomentModel::moment(std::size_t q, const Eigen::VectorXd& x) const {
  const double lin = eta.col(static_cast<Eigen::Index>(q)).dot(x);
  return log_link[q] ? std::exp(lin) : lin;
}

Eigen::VectorXd fit_variance_glm(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                 const GlmOptions& options) {
  return fit_variance_glm(y, X, 0.0, options);
}

Eigen::VectorXd fit_variance_glm(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, double floor,
                                 const GlmOptions& options) {
  if (y.size() != X.rows()) throw DataError("GLM response length does not match X rows");
  if (!y.allFinite() || (y.array() < 0).any())
    throw DataError("quasi-Poisson response must be finite and nonnegative");
  if (!(floor >= 0) || !std::isfinite(floor)) throw DataError("GLM floor must be finite and nonnegative");
  const double ybar = y.mean();
  if (!(ybar > 0)) throw NumericError("quasi-Poisson response is identically zero");

  // mu = e + floor with e = exp(eta). Working weights e^2 / mu, working response
  // eta + (y - mu) / e.
  const double excess = std::max(ybar - floor, 0.1 * ybar);
  Eigen::VectorXd e = ((y.array() - floor).max(0.0) + 0.1 * excess).matrix();
  Eigen::VectorXd eta = e.array().log().matrix();
  Eigen::VectorXd mu = (e.array() + floor).matrix();
  // sqrt(w) X and sqrt(w) z, written so both stay finite as e underflows.
  // A row whose mean underflowed to zero carries no weight.
  auto inv_root_mu = [&]() { return (mu.array() > 0).select(mu.array().rsqrt(), 0.0).matrix().eval(); };
  auto design = [&]() { return (e.cwiseProduct(inv_root_mu()).asDiagonal() * X).eval(); };
  auto response = [&]() {
    return (e.cwiseProduct(eta) + y - mu).cwiseProduct(inv_root_mu()).eval();
  };
  Eigen::VectorXd gamma = weighted_least_squares(design(), response());
  eta = X * gamma;
  e = eta.array().exp().matrix();
  mu = (e.array() + floor).matrix();
  double deviance = poisson_deviance(y, mu);

  double last_relative = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::VectorXd next = weighted_least_squares(design(), response(), &gamma);
    Eigen::VectorXd next_eta = X * next;
    Eigen::VectorXd next_e = next_eta.array().exp().matrix();
    double next_dev = poisson_deviance(y, (next_e.array() + floor).matrix());
    const double full_step = (next - gamma).cwiseAbs().maxCoeff();
    // Step halving when the update overshoots.
    auto overshoots = [&]() { return !std::isfinite(next_dev) || next_dev > deviance * (1 + 1e-12) + 1e-300; };
    for (int half = 0; half < 100 && overshoots(); ++half) {
      next = 0.5 * (next + gamma);
      next_eta = X * next;
      next_e = next_eta.array().exp().matrix();
      next_dev = poisson_deviance(y, (next_e.array() + floor).matrix());
    }
    if (overshoots()) {
      // No usable descent left: fine at the optimum, a failure away from it.
      if (full_step < options.tolerance) return gamma;
      throw NumericError("quasi-Poisson IRLS diverged");
    }
    const double change = (next - gamma).cwiseAbs().maxCoeff();
    const double previous = deviance;
    gamma = next;
    eta = next_eta;
    e = next_e;
    mu = (e.array() + floor).matrix();
    deviance = next_dev;
    if (change < options.tolerance) return gamma;
    last_relative = std::abs(previous - deviance) / (std::abs(deviance) + 0.1);
  }
  // Coefficients still moving but the deviance is not: a flat ridge, or rounding jitter when
  // the fitted means span many orders of magnitude.
  if (last_relative < options.deviance_tolerance) return gamma;
  throw NumericError("quasi-Poisson IRLS did not converge in " +
                     std::to_string(options.max_iterations) + " iterations");
}

VarianceModel fit_variance_model(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd* floor) {
  if (floor && floor->size() != xi.cols()) throw DataError("one GLM floor per score is needed");
  VarianceModel model;
  model.gamma.resize(X.cols(), xi.cols());
  for (Eigen::Index j = 0; j < xi.cols(); ++j)
    model.gamma.col(j) =
        fit_variance_glm(xi.col(j).array().square().matrix(), X, floor ? (*floor)[j] : 0.0);
  return model;
}

Eigen::MatrixXd column_correlation(const Eigen::MatrixXd& values) {
  const Eigen::Index J = values.cols();
  const Eigen::MatrixXd centered = values.rowwise() - values.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  Eigen::MatrixXd C = Eigen::MatrixXd::Identity(J, J);
  for (Eigen::Index a = 0; a < J; ++a)
    for (Eigen::Index b = 0; b < J; ++b)
      if (a != b && sd[a] > 0 && sd[b] > 0) C(a, b) = cov(a, b) / (sd[a] * sd[b]);
  return C;
}

ScaledScores scale_and_correlate(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& X,
                                 const VarianceModel& variance,
                                 const ScoreContamination* contamination) {
  if (variance.gamma.rows() != X.cols() || variance.gamma.cols() != xi.cols())
    throw DataError("variance model does not match score and covariate dimensions");
  ScaledScores out;
  const Eigen::MatrixXd scale = (0.5 * (X * variance.gamma)).array().exp().matrix();
  out.xi_star = xi.cwiseQuotient(scale);
  if (!contamination) {
    out.C = column_correlation(out.xi_star);
    return out;
  }
  const Eigen::Index J = xi.cols();
  const Eigen::Index N = xi.rows();
  const Eigen::MatrixXd& noise = contamination->noise;
  const Eigen::MatrixXd& hat = contamination->hat;
  if (noise.rows() != J || noise.cols() != J) throw DataError("score noise covariance has the wrong size");
  const bool mixing = hat.size() > 0;
  if (mixing && (hat.rows() != N || hat.cols() != N)) throw DataError("mean-fit hat matrix has the wrong size");
  const Eigen::MatrixXd hat_sq = mixing ? hat.cwiseProduct(hat).eval() : Eigen::MatrixXd();
  const Eigen::MatrixXd inv = scale.cwiseInverse();
  Eigen::MatrixXd cov(J, J);
  for (Eigen::Index a = 0; a < J; ++a) {
    for (Eigen::Index b = a; b < J; ++b) {
      const Eigen::VectorXd inv_ab = inv.col(a).cwiseProduct(inv.col(b));
      double num = out.xi_star.col(a).dot(out.xi_star.col(b)) - noise(a, b) * inv_ab.sum();
      double den = static_cast<double>(N);
      if (mixing) {
        const Eigen::VectorXd mixed = hat_sq * scale.col(a).cwiseProduct(scale.col(b));
        den += -2.0 * hat.diagonal().sum() + mixed.cwiseProduct(inv_ab).sum();
      }
      cov(a, b) = cov(b, a) = num / den;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  cov = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
  out.C = Eigen::MatrixXd::Identity(J, J);
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  for (Eigen::Index a = 0; a < J; ++a)
    for (Eigen::Index b = 0; b < J; ++b)
      if (a != b && sd[a] > 0 && sd[b] > 0) out.C(a, b) = cov(a, b) / (sd[a] * sd[b]);
  return out;
}

CorrelationEigenmodel fit_correlation_eigenmodel(const Eigen::MatrixXd& xi_star,
                                                 const Eigen::MatrixXd& X) {
  if (X.rows() <= X.cols()) throw DataError("correlation eigenmodel needs N > P");
  const auto N = static_cast<double>(xi_star.rows());
  // Standardize with the 1/N convention so that z'z / N is exactly the correlation matrix.
  Eigen::MatrixXd z = xi_star.rowwise() - xi_star.colwise().mean();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / N);
    if (sd > 0) z.col(j) /= sd;
  }
  const Eigen::MatrixXd C = z.transpose() * z / N;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C);
  CorrelationEigenmodel model;
  model.U = eig.eigenvectors();
  const Eigen::Index J = C.cols();
  model.coefficients = Eigen::MatrixXd::Zero(X.cols(), J);
  model.active.assign(static_cast<std::size_t>(J), false);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  const Eigen::MatrixXd proj = z * model.U;
  for (Eigen::Index j = 0; j < J; ++j) {
    if (eig.eigenvalues()[j] <= 1e-12 * top) continue;
    model.coefficients.col(j) = fit_variance_glm(proj.col(j).array().square().matrix(), X);
    model.active[static_cast<std::size_t>(j)] = true;
  }
  return model;
}

ThirdMomentModel fit_third_moments(const Eigen::MatrixXd& xi_star, const Eigen::MatrixXd& X) {
  ThirdMomentModel model;
  model.triples = sorted_tuples<3>(static_cast<int>(xi_star.cols()));
  const Eigen::MatrixXd responses = product_responses(xi_star, model.triples);
  model.delta = ols_projector(X) * responses;
  return model;
}

FourthMomentModel fit_fourth_moments(const Eigen::MatrixXd& xi_star, const Eigen::MatrixXd& X) {
  FourthMomentModel model;
  model.quads = sorted_tuples<4>(static_cast<int>(xi_star.cols()));
  const Eigen::MatrixXd responses = product_responses(xi_star, model.quads);
  model.eta = ols_projector(X) * responses;
  model.log_link.resize(model.quads.size());
  for (std::size_t q = 0; q < model.quads.size(); ++q) {
    model.log_link[q] = even_multiplicity(model.quads[q].idx);
    if (model.log_link[q])
      model.eta.col(static_cast<Eigen::Index>(q)) =
          fit_variance_glm(responses.col(static_cast<Eigen::Index>(q)), X);
  }
  return model;
}

}  // namespace fmr
