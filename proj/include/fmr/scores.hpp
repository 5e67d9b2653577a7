#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fmr/basis.hpp"

namespace fmr {

/// Variance floor applied to the smoothed noise variance.
inline constexpr double kNoiseVarianceFloor = 1e-8;

struct ScoreSet {
  Eigen::MatrixXd xi;     ///< N x J basis scores
  double lambda = 0.0;    ///< shared smoothing parameter
  Eigen::MatrixXd noise;  ///< N x T, residual - xi * phi'
  /// diag((I - H)(I - H)') for the score smoother H: the fraction of white-noise variance
  /// left in the noise at each grid point.
  Eigen::VectorXd retained_fraction;
  Eigen::MatrixXd projection;  ///< J x T; xi_i = projection * residual_i
  Eigen::VectorXd sigma2_eps;  ///< filled by estimate_noise_variance
};

/// Penalized regression of every residual curve on the basis with one REML lambda selected
/// on the stacked data; the system matrix is factorized once for all subjects.
ScoreSet extract_scores(const Eigen::MatrixXd& residuals, const CyclicBasis& basis,
                        std::optional<double> lambda = std::nullopt);

/// Column means of squared noise, smoothed with REML on the basis grid and floored.
/// When retained_fraction is given the column means are divided by it first.
Eigen::VectorXd estimate_noise_variance(const Eigen::MatrixXd& noise, const CyclicBasis& basis,
                                        const Eigen::VectorXd* retained_fraction = nullptr);

/// T x T matrix A with E[column means of squared noise] = A sigma2 for independent errors of
/// variance sigma2(t). The noise is keep * (Y - X beta_smooth)_i with keep = I - phi projection,
/// and mean_smoothers[p] maps the pointwise OLS row p to beta_smooth row p.
Eigen::MatrixXd noise_expectation_operator(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& projection,
                                           const Eigen::MatrixXd& X,
                                           const std::vector<Eigen::MatrixXd>& mean_smoothers);

/// Same as above, but the column means are first mapped through A^{-1} so that they are
/// unbiased for sigma2 before smoothing.
Eigen::VectorXd estimate_noise_variance(const Eigen::MatrixXd& noise, const CyclicBasis& basis,
                                        const Eigen::MatrixXd& expectation);

}  // namespace fmr
