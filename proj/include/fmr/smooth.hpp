#pragma once

#include <Eigen/Dense>

#include "fmr/basis.hpp"

namespace fmr {

struct PenalizedFit {
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  double edf = 0.0;  ///< trace of the hat matrix
  Eigen::VectorXd fitted;
};

/// Penalty eigenvalues below this fraction of the largest are treated as exact zeros.
inline constexpr double kPenaltyRankTolerance = 1e-10;

/// P = U diag(d) U' with the null-space eigenvalues set to exactly zero.
struct PenaltyEigen {
  Eigen::MatrixXd U;
  Eigen::VectorXd d;
  int rank = 0;
  double log_det_plus = 0.0;  ///< sum of log of the positive eigenvalues
};
PenaltyEigen penalty_eigen(const Eigen::MatrixXd& penalty);

/// argmin ||y - D c||^2 + lambda c' P c, solved in the penalty eigenbasis by a Jacobi-scaled
/// Cholesky factorization. Throws NumericError when lambda = 0 and the design is rank
/// deficient; for lambda > 0 a 1e-10 ridge on the scaled system is added on failure.
PenalizedFit penalized_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                           const Eigen::MatrixXd& penalty, double lambda);

/// Search bracket and tolerance of the REML smoothing-parameter search, in log10(lambda).
inline constexpr double kLogLambdaMin = -8.0;
inline constexpr double kLogLambdaMax = 12.0;
inline constexpr int kRemlScanPoints = 41;
inline constexpr double kRemlTolerance = 1e-4;

/// Gaussian REML for m response vectors that share one design, one penalty, one lambda and
/// one residual variance. Only sufficient statistics are stored, so evaluating the criterion
/// costs O(J^3 + J^2 m) independent of the number of rows.
class RemlProblem {
 public:
  /// responses is n x m (one column per response vector).
  RemlProblem(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
              const Eigen::MatrixXd& responses);

  /// Negative twice the profiled log restricted likelihood, up to a constant. Smaller is better.
  double criterion(double log10_lambda) const;
  /// Minimizer over [kLogLambdaMin, kLogLambdaMax]: coarse scan, then golden section.
  double select_log10_lambda() const;

  int nullspace_dim() const { return nullspace_dim_; }
  int penalty_rank() const { return penalty_rank_; }

 private:
  // All stored in the penalty eigenbasis.
  Eigen::MatrixXd gram_;
  Eigen::VectorXd d_;
  Eigen::MatrixXd cross_;  // (D U)' Y, J x m
  Eigen::MatrixXd ls_coef_;
  double rss_ls_ = 0.0;
  double log_det_penalty_plus_ = 0.0;
  bool ls_available_ = false;
  double total_ss_ = 0.0;
  Eigen::Index rows_ = 0;
  Eigen::Index responses_ = 0;
  int nullspace_dim_ = 0;
  int penalty_rank_ = 0;
};

/// Solves (G + lambda P) X = B the same way as penalized_fit.
Eigen::MatrixXd solve_penalized(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& penalty,
                                double lambda, const Eigen::MatrixXd& rhs);

/// T x T hat matrix D (D'D + lambda P)^{-1} D' of a penalized fit on `design`.
Eigen::MatrixXd smoother_matrix(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                                double lambda);

double reml_lambda(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                   const Eigen::MatrixXd& penalty);

/// REML-selected penalized fit of values on the basis grid; returns the fitted curve.
Eigen::VectorXd smooth_curve(const Eigen::VectorXd& values, const CyclicBasis& basis);
/// Same, also reporting the fit (lambda, edf, coefficients).
PenalizedFit smooth_fit(const Eigen::VectorXd& values, const CyclicBasis& basis);

}  // namespace fmr
