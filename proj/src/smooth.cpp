#include "fmr/smooth.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "fmr/errors.hpp"

namespace fmr {
namespace {

constexpr double kRidge = 1e-10;

// Cholesky of A = Gt + lambda diag(d) after symmetric Jacobi scaling. In the penalty
// eigenbasis the huge penalized directions sit on the diagonal, so scaling keeps the
// factorization accurate for any lambda in the search range.
class ScaledCholesky {
 public:
  ScaledCholesky(const Eigen::MatrixXd& gram_t, const Eigen::VectorXd& d, double lambda) {
    Eigen::MatrixXd A = gram_t;
    if (lambda > 0) A.diagonal() += lambda * d;
    const Eigen::VectorXd diag = A.diagonal();
    if ((diag.array() <= 0).any()) {
      if (lambda == 0)
        throw NumericError("singular normal equations: design is rank deficient at lambda = 0");
      throw NumericError("penalized normal equations not solvable");
    }
    scale_ = diag.cwiseSqrt().cwiseInverse();
    A = scale_.asDiagonal() * A * scale_.asDiagonal();
    llt_.compute(A);
    if (llt_.info() != Eigen::Success) {
      if (lambda == 0)
        throw NumericError("singular normal equations: design is rank deficient at lambda = 0");
      A.diagonal().array() += kRidge;
      llt_.compute(A);
      if (llt_.info() != Eigen::Success) throw NumericError("penalized normal equations not solvable");
    }
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    return scale_.asDiagonal() * llt_.solve(scale_.asDiagonal() * rhs);
  }

  double log_det() const {
    double v = 0.0;
    const Eigen::MatrixXd& L = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < L.rows(); ++i) v += 2.0 * std::log(L(i, i));
    return v - 2.0 * scale_.array().log().sum();
  }

 private:
  Eigen::VectorXd scale_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace

PenaltyEigen penalty_eigen(const Eigen::MatrixXd& penalty) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(penalty);
  if (eig.info() != Eigen::Success) throw NumericError("penalty eigendecomposition failed");
  PenaltyEigen out;
  out.U = eig.eigenvectors();
  out.d = eig.eigenvalues();
  const double top = out.d.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < out.d.size(); ++i) {
    if (out.d[i] > kPenaltyRankTolerance * top) {
      ++out.rank;
      out.log_det_plus += std::log(out.d[i]);
    } else {
      out.d[i] = 0.0;  // exact null space
    }
  }
  return out;
}

Eigen::MatrixXd solve_penalized(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& penalty,
                                double lambda, const Eigen::MatrixXd& rhs) {
  const PenaltyEigen pe = penalty_eigen(penalty);
  const ScaledCholesky chol(pe.U.transpose() * gram * pe.U, pe.d, lambda);
  return pe.U * chol.solve(pe.U.transpose() * rhs);
}

PenalizedFit penalized_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                           const Eigen::MatrixXd& penalty, double lambda) {
  if (!(lambda >= 0)) throw ConfigError("smoothing parameter must be nonnegative");
  if (y.size() != design.rows()) throw DataError("response length does not match design rows");
  if (lambda == 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols())
      throw NumericError("singular normal equations: design is rank deficient at lambda = 0");
  }
  const PenaltyEigen pe = penalty_eigen(penalty);
  const Eigen::MatrixXd DU = design * pe.U;
  const Eigen::MatrixXd gram_t = DU.transpose() * DU;
  const ScaledCholesky chol(gram_t, pe.d, lambda);
  const Eigen::VectorXd theta = chol.solve(DU.transpose() * y);
  PenalizedFit fit;
  fit.lambda = lambda;
  fit.coefficients = pe.U * theta;
  fit.fitted = DU * theta;
  fit.edf = chol.solve(gram_t).trace();
  return fit;
}

RemlProblem::RemlProblem(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                         const Eigen::MatrixXd& responses)
    : rows_(design.rows()), responses_(responses.cols()) {
  if (responses.rows() != design.rows())
    throw DataError("response rows do not match design rows");
  if (design.rows() <= design.cols())
    throw DataError("REML needs more observations (" + std::to_string(design.rows()) +
                    ") than basis functions (" + std::to_string(design.cols()) + ")");
  const PenaltyEigen pe = penalty_eigen(penalty);
  d_ = pe.d;
  penalty_rank_ = pe.rank;
  nullspace_dim_ = static_cast<int>(penalty.rows()) - penalty_rank_;
  log_det_penalty_plus_ = pe.log_det_plus;
  const Eigen::MatrixXd DU = design * pe.U;
  gram_ = DU.transpose() * DU;
  cross_ = DU.transpose() * responses;
  total_ss_ = responses.squaredNorm();

  // Residual sum of squares at lambda = 0, computed directly so that the criterion does not
  // lose precision to cancellation when the data are (nearly) in the span of the design.
  Eigen::LLT<Eigen::MatrixXd> llt(gram_);
  if (llt.info() == Eigen::Success) {
    ls_available_ = true;
    ls_coef_ = llt.solve(cross_);
    rss_ls_ = (responses - DU * ls_coef_).squaredNorm();
  }
}

double RemlProblem::criterion(double log10_lambda) const {
  const double lambda = std::pow(10.0, log10_lambda);
  std::optional<ScaledCholesky> chol;
  try {
    chol.emplace(gram_, d_, lambda);
  } catch (const NumericError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const Eigen::MatrixXd coef = chol->solve(cross_);
  const double roughness = (d_.asDiagonal() * coef.cwiseProduct(coef)).sum();
  double penalized_rss;
  if (ls_available_) {
    const Eigen::MatrixXd diff = coef - ls_coef_;
    penalized_rss = rss_ls_ + (diff.transpose() * gram_ * diff).trace() + lambda * roughness;
  } else {
    penalized_rss = total_ss_ - (coef.transpose() * cross_).trace();
  }
  penalized_rss = std::max(penalized_rss, 1e-300);
  const auto m = static_cast<double>(responses_);
  const double dof = m * static_cast<double>(rows_ - nullspace_dim_);
  return dof * std::log(penalized_rss) +
         m * (chol->log_det() - penalty_rank_ * std::log(lambda) - log_det_penalty_plus_);
}

double RemlProblem::select_log10_lambda() const {
  const double step = (kLogLambdaMax - kLogLambdaMin) / (kRemlScanPoints - 1);
  int best = -1;
  double best_value = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kRemlScanPoints; ++i) {
    const double v = criterion(kLogLambdaMin + i * step);
    if (!std::isfinite(v)) throw NumericError("non-finite REML criterion during lambda search");
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }
  double a = kLogLambdaMin + std::max(best - 1, 0) * step;
  double b = kLogLambdaMin + std::min(best + 1, kRemlScanPoints - 1) * step;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = criterion(c), fd = criterion(d);
  while (b - a > kRemlTolerance) {
    if (!std::isfinite(fc) || !std::isfinite(fd))
      throw NumericError("non-finite REML criterion during lambda search");
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = criterion(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = criterion(d);
    }
  }
  // Keep the scan optimum if golden section landed somewhere worse (flat criteria).
  const double mid = 0.5 * (a + b);
  const double scan_best = kLogLambdaMin + best * step;
  return criterion(mid) <= best_value ? mid : scan_best;
}

Eigen::MatrixXd smoother_matrix(const Eigen::MatrixXd& design, const Eigen::MatrixXd& penalty,
                                double lambda) {
  const Eigen::MatrixXd gram = design.transpose() * design;
  return design * solve_penalized(gram, penalty, lambda, design.transpose());
}

double reml_lambda(const Eigen::VectorXd& y, const Eigen::MatrixXd& design,
                   const Eigen::MatrixXd& penalty) {
  RemlProblem problem(design, penalty, y);
  return std::pow(10.0, problem.select_log10_lambda());
}

PenalizedFit smooth_fit(const Eigen::VectorXd& values, const CyclicBasis& basis) {
  if (values.size() != basis.design().rows())
    throw DataError("curve length " + std::to_string(values.size()) +
                    " does not match basis grid length " + std::to_string(basis.design().rows()));
  if (!values.allFinite()) throw DataError("curve to smooth contains non-finite values");
  const double lambda = reml_lambda(values, basis.design(), basis.penalty());
  return penalized_fit(values, basis.design(), basis.penalty(), lambda);
}

Eigen::VectorXd smooth_curve(const Eigen::VectorXd& values, const CyclicBasis& basis) {
  return smooth_fit(values, basis).fitted;
}

}  // namespace fmr
