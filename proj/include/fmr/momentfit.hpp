#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <vector>

namespace fmr {

/// Var(xi_ij | X_i) = exp(X_i' gamma_j); column j of gamma is gamma_j.
struct VarianceModel {
  Eigen::MatrixXd gamma;  ///< P x J
  /// exp(x' gamma_j / 2) for every j.
  Eigen::VectorXd half_scale(const Eigen::VectorXd& x) const;
};

/// C(x) = sum_j exp(x' coef_j) U_j U_j'. Directions with a zero eigenvalue keep weight 0.
struct CorrelationEigenmodel {
  Eigen::MatrixXd U;             ///< J x J, orthonormal columns
  Eigen::MatrixXd coefficients;  ///< P x J
  std::vector<bool> active;
  Eigen::MatrixXd at(const Eigen::VectorXd& x) const;
};

struct CorrelationModel {
  Eigen::MatrixXd C;  ///< J x J empirical correlation of scaled scores
  std::optional<CorrelationEigenmodel> eigen;
  /// Covariate-dependent correlation when the eigenmodel is present, otherwise C.
  Eigen::MatrixXd at(const Eigen::VectorXd& x) const;
};

/// Sorted index tuple j1 <= j2 <= ... with the number of distinct orderings it stands for.
template <std::size_t K>
struct SortedTuple {
  std::array<int, K> idx{};
  double multiplicity = 1.0;
};

template <std::size_t K>
std::vector<SortedTuple<K>> sorted_tuples(int J);

/// True when every index in the quadruple appears an even number of times.
bool even_multiplicity(const std::array<int, 4>& q);

/// E(xi*_j1 xi*_j2 xi*_j3 | X) = X' delta_t for each sorted triple t.
struct ThirdMomentModel {
  std::vector<SortedTuple<3>> triples;
  Eigen::MatrixXd delta;  ///< P x n_triples
};

/// E(xi*_j1..xi*_j4 | X) = exp(X' eta_q) when log_link[q], X' eta_q otherwise.
struct FourthMomentModel {
  std::vector<SortedTuple<4>> quads;
  std::vector<bool> log_link;
  Eigen::MatrixXd eta;  ///< P x n_quads
  double moment(std::size_t q, const Eigen::VectorXd& x) const;
};

struct GlmOptions {
  double tolerance = 1e-8;  ///< on the largest coefficient change
  int max_iterations = 100;
  /// When max_iterations run out, the fit is still accepted if the last relative deviance
  /// change |D_k - D_{k-1}| / (|D_k| + 0.1) is below this.
  double deviance_tolerance = 1e-8;
};

/// Log-link quasi-Poisson point estimate by IRLS.
Eigen::VectorXd fit_variance_glm(const Eigen::VectorXd& response, const Eigen::MatrixXd& X,
                                 const GlmOptions& options = {});

/// Quasi-Poisson fit of a response with mean exp(X gamma) + floor for a known floor >= 0.
/// floor = 0 gives fit_variance_glm.
Eigen::VectorXd fit_variance_glm(const Eigen::VectorXd& response, const Eigen::MatrixXd& X,
                                 double floor, const GlmOptions& options = {});

/// One quasi-Poisson fit of xi_j^2 on X per basis function. With `floor`, entry j is the
/// part of E[xi_j^2] that does not come from the scores (noise carried into them).
VarianceModel fit_variance_model(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd* floor = nullptr);

struct ScaledScores {
  Eigen::MatrixXd xi_star;  ///< N x J
  Eigen::MatrixXd C;        ///< J x J
};

/// What the estimated scores carry besides the true ones.
struct ScoreContamination {
  Eigen::MatrixXd noise;  ///< J x J covariance of the noise in every subject's scores
  Eigen::MatrixXd hat;    ///< N x N hat matrix of the mean fit; empty to ignore it
};

/// Without contamination C is the Pearson correlation of xi*. With it, C solves the moment
/// equations E[xi*_ia xi*_ib] = C_ab m_iab + noise_ab / (s_ia s_ib), where s are the model
/// scales and m_iab = 1 - 2 H_ii + sum_k H_ik^2 s_ka s_kb / (s_ia s_ib) accounts for the
/// scores the mean fit mixes across subjects. The result is clipped to the nearest PSD
/// matrix and rescaled to unit diagonal.
ScaledScores scale_and_correlate(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& X,
                                 const VarianceModel& variance,
                                 const ScoreContamination* contamination = nullptr);

/// Pearson correlation of the columns; a constant column gets unit diagonal and zero
/// off-diagonal entries.
Eigen::MatrixXd column_correlation(const Eigen::MatrixXd& values);

CorrelationEigenmodel fit_correlation_eigenmodel(const Eigen::MatrixXd& xi_star,
                                                 const Eigen::MatrixXd& X);

/// Largest admissible magnitude of a cross-moment product.
inline constexpr double kMaxProductMagnitude = 1e12;

ThirdMomentModel fit_third_moments(const Eigen::MatrixXd& xi_star, const Eigen::MatrixXd& X);
FourthMomentModel fit_fourth_moments(const Eigen::MatrixXd& xi_star, const Eigen::MatrixXd& X);

}  // namespace fmr
