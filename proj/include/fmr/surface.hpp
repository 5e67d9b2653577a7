#pragma once

#include <Eigen/Dense>

#include "fmr/basis.hpp"
#include "fmr/momentfit.hpp"

namespace fmr {

/// Fitted (or true) parameters of the moment regression on one grid and covariate design.
struct MomentModel {
  CyclicBasis basis;           ///< score basis, evaluated on the model grid
  Eigen::MatrixXd beta;        ///< P x T fixed-effect functions
  Eigen::VectorXd sigma2_eps;  ///< T noise variance
  VarianceModel variance;
  CorrelationModel correlation;
  ThirdMomentModel third;
  FourthMomentModel fourth;

  Eigen::Index points() const { return basis.design().rows(); }
  Eigen::Index covariates() const { return beta.rows(); }
};

/// Sigma(s1, s2 | x) for grid indices; the nugget is added when s1 == s2.
double conditional_covariance(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s1,
                              Eigen::Index s2);
/// Full T x T conditional covariance matrix.
Eigen::MatrixXd covariance_matrix(const MomentModel& model, const Eigen::VectorXd& x);

/// Throws NumericError if either margin has zero variance.
double conditional_correlation(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s1,
                               Eigen::Index s2);
/// Correlation between s and s + lag, wrapping around the closed domain. The grid must be
/// equally spaced over one full period and lag a multiple of the spacing.
double lag_correlation(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s, double lag);

double conditional_skewness(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s);
/// Excess kurtosis (raw standardized fourth moment minus 3).
double conditional_kurtosis(const MomentModel& model, const Eigen::VectorXd& x, Eigen::Index s);
double variance_ratio(const MomentModel& model, const Eigen::VectorXd& x1,
                      const Eigen::VectorXd& x2, Eigen::Index s);

// Whole-grid curves.
Eigen::VectorXd mean_curve(const MomentModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd variance_curve(const MomentModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd random_effect_variance_curve(const MomentModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd lag_correlation_curve(const MomentModel& model, const Eigen::VectorXd& x, double lag);
Eigen::VectorXd skewness_curve(const MomentModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd kurtosis_curve(const MomentModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd variance_ratio_curve(const MomentModel& model, const Eigen::VectorXd& x1,
                                     const Eigen::VectorXd& x2);

/// Grid-index shift equivalent to a lag in domain units.
Eigen::Index lag_steps(const MomentModel& model, double lag);

}  // namespace fmr
