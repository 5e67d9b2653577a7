#include "fmr/surface.hpp"

#include <cmath>
#include <string>

#include "fmr/errors.hpp"

namespace fmr {
namespace {

void check_covariate(const MomentModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.covariates())
    throw DataError("covariate vector has length " + std::to_string(x.size()) + ", model expects " +
                    std::to_string(model.covariates()));
}

void check_index(const MomentModel& model, Eigen::Index s) {
  if (s < 0 || s >= model.points()) throw DataError("grid index out of range");
}

// v(s) = exp(x' gamma / 2) * phi(s), one row per grid point (T x J).
Eigen::MatrixXd scaled_basis(const MomentModel& model, const Eigen::VectorXd& x) {
  return model.basis.design() * model.variance.half_scale(x).asDiagonal();
}

double product(const Eigen::RowVectorXd& v, const auto& idx) {
  double p = 1.0;
  for (int j : idx) p *= v[j];
  return p;
}

}  // namespace

double conditional_covariance(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s1,
                              Eigen::Index s2) {
  check_covariate(model, x);
  check_index(model, s1);
  check_index(model, s2);
  const Eigen::VectorXd e = model.variance.half_scale(x);
  const Eigen::VectorXd v1 = model.basis.design().row(s1).transpose().cwiseProduct(e);
  const Eigen::VectorXd v2 = model.basis.design().row(s2).transpose().cwiseProduct(e);
  double sigma = v1.dot(model.correlation.at(x) * v2);
  if (s1 == s2) sigma += model.sigma2_eps[s1];
  return sigma;
}

Eigen::MatrixXd covariance_matrix(const MomentModel& model, const Eigen::VectorXd& x) {
  check_covariate(model, x);
  const Eigen::MatrixXd V = scaled_basis(model, x);
  Eigen::MatrixXd S = V * model.correlation.at(x) * V.transpose();
  S.diagonal() += model.sigma2_eps;
  return S;
}

Eigen::VectorXd random_effect_variance_curve(const MomentModel& model, const Eigen::VectorXd& x) {
  check_covariate(model, x);
  const Eigen::MatrixXd V = scaled_basis(model, x);
  return (V * model.correlation.at(x)).cwiseProduct(V).rowwise().sum();
}

Eigen::VectorXd variance_curve(const MomentModel& model, const Eigen::VectorXd& x) {
  return random_effect_variance_curve(model, x) + model.sigma2_eps;
}

Eigen::VectorXd mean_curve(const MomentModel& model, const Eigen::VectorXd& x) {
  check_covariate(model, x);
  return model.beta.transpose() * x;
}

double conditional_correlation(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s1,
                               Eigen::Index s2) {
  const double v1 = conditional_covariance(model, x, s1, s1);
  const double v2 = conditional_covariance(model, x, s2, s2);
  if (!(v1 > 0) || !(v2 > 0)) throw NumericError("zero conditional variance in correlation");
  if (s1 == s2) return 1.0;
  return conditional_covariance(model, x, s1, s2) / std::sqrt(v1 * v2);
}

Eigen::Index lag_steps(const MomentModel& model, double lag) {
  const Eigen::Index T = model.points();
  const double spacing = model.basis.period() / static_cast<double>(T);
  const double steps = lag / spacing;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-6)
    throw DataError("lag " + std::to_string(lag) + " is not a multiple of the grid spacing");
  Eigen::Index k = static_cast<Eigen::Index>(rounded) % T;
  if (k < 0) k += T;
  return k;
}

double lag_correlation(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s, double lag) {
  check_index(model, s);
  return conditional_correlation(model, x, s, (s + lag_steps(model, lag)) % model.points());
}

Eigen::VectorXd lag_correlation_curve(const MomentModel& model, const Eigen::VectorXd& x, double lag) {
  const Eigen::Index T = model.points();
  const Eigen::Index k = lag_steps(model, lag);
  const Eigen::MatrixXd S = covariance_matrix(model, x);
  Eigen::VectorXd out(T);
  for (Eigen::Index s = 0; s < T; ++s) {
    const Eigen::Index t = (s + k) % T;
    if (!(S(s, s) > 0) || !(S(t, t) > 0))
      throw NumericError("zero conditional variance in correlation");
    out[s] = s == t ? 1.0 : S(s, t) / std::sqrt(S(s, s) * S(t, t));
  }
  return out;
}

Eigen::VectorXd skewness_curve(const MomentModel& model, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd V = scaled_basis(model, x);
  const Eigen::VectorXd var = variance_curve(model, x);
  const auto& triples = model.third.triples;
  Eigen::VectorXd coef(static_cast<Eigen::Index>(triples.size()));
  for (std::size_t t = 0; t < triples.size(); ++t)
    coef[static_cast<Eigen::Index>(t)] =
        triples[t].multiplicity * model.third.delta.col(static_cast<Eigen::Index>(t)).dot(x);
  Eigen::VectorXd out(V.rows());
  for (Eigen::Index s = 0; s < V.rows(); ++s) {
    if (!(var[s] > 0)) throw NumericError("zero conditional variance in skewness");
    const Eigen::RowVectorXd v = V.row(s);
    double num = 0.0;
    for (std::size_t t = 0; t < triples.size(); ++t)
      num += coef[static_cast<Eigen::Index>(t)] * product(v, triples[t].idx);
    out[s] = num / std::pow(var[s], 1.5);
  }
  return out;
}

Eigen::VectorXd kurtosis_curve(const MomentModel& model, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd V = scaled_basis(model, x);
  const Eigen::VectorXd var_b = random_effect_variance_curve(model, x);
  const auto& quads = model.fourth.quads;
  Eigen::VectorXd coef(static_cast<Eigen::Index>(quads.size()));
  for (std::size_t q = 0; q < quads.size(); ++q)
    coef[static_cast<Eigen::Index>(q)] = quads[q].multiplicity * model.fourth.moment(q, x);
  Eigen::VectorXd out(V.rows());
  for (Eigen::Index s = 0; s < V.rows(); ++s) {
    const double s2 = model.sigma2_eps[s];
    const double total = var_b[s] + s2;
    if (!(total > 0)) throw NumericError("zero conditional variance in kurtosis");
    const Eigen::RowVectorXd v = V.row(s);
    double K = 0.0;
    for (std::size_t q = 0; q < quads.size(); ++q)
      K += coef[static_cast<Eigen::Index>(q)] * product(v, quads[q].idx);
    out[s] = (K + 3.0 * s2 * s2 + 6.0 * s2 * var_b[s]) / (total * total) - 3.0;
  }
  return out;
}

double conditional_skewness(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s) {
  check_index(model, s);
  return skewness_curve(model, x)[s];
}

double conditional_kurtosis(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s) {
  check_index(model, s);
  return kurtosis_curve(model, x)[s];
}

Eigen::VectorXd variance_ratio_curve(const MomentModel& model, const Eigen::VectorXd& x1,
                                     const Eigen::VectorXd& x2) {
  const Eigen::VectorXd a = variance_curve(model, x1);
  const Eigen::VectorXd b = variance_curve(model, x2);
  if ((b.array() <= 0).any()) throw NumericError("zero conditional variance in ratio denominator");
  return a.cwiseQuotient(b);
}

double variance_ratio(const MomentModel& model, const Eigen::VectorXd& x1,
                      const Eigen::VectorXd& x2, Eigen::Index s) {
  check_index(model, s);
  const double b = conditional_covariance(model, x2, s, s);
  if (!(b > 0)) throw NumericError("zero conditional variance in ratio denominator");
  return conditional_covariance(model, x1, s, s) / b;
}

}  // namespace fmr
