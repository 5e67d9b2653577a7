#pragma once

#include <Eigen/Dense>
#include <optional>

#include "fmr/basis.hpp"
#include "fmr/dataset.hpp"

namespace fmr {

struct FoSRFit {
  Eigen::MatrixXd beta_raw;     ///< P x T pointwise OLS coefficients
  Eigen::MatrixXd beta_smooth;  ///< P x T smoothed coefficient functions
  Eigen::MatrixXd residuals;    ///< N x T, Y - X beta_smooth
  Eigen::MatrixXd design_pinv;  ///< P x N, (X'X)^{-1} X'
  Eigen::VectorXd lambdas;      ///< smoothing parameter used for each coefficient row
};

/// (X'X)^{-1} X'; throws RankDeficientError unless X has full column rank and N >= P.
Eigen::MatrixXd ols_projector(const Eigen::MatrixXd& X);

/// P x T matrix whose column t is the OLS fit of Y[, t] on X.
Eigen::MatrixXd pointwise_ols(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X);

struct FoSROptions {
  /// Skip REML and smooth every row with this lambda.
  std::optional<double> fixed_lambda;
};

/// Pointwise OLS, then each coefficient row smoothed with its own REML lambda.
FoSRFit fit_fosr(const FunctionalDataset& data, const CyclicBasis& basis,
                 const FoSROptions& options = {});

}  // namespace fmr
