#include "fmr/scores.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fmr/errors.hpp"
#include "fmr/smooth.hpp"

namespace fmr {

ScoreSet extract_scores(const Eigen::MatrixXd& residuals, const CyclicBasis& basis,
                        std::optional<double> lambda) {
  const Eigen::MatrixXd& phi = basis.design();
  const Eigen::MatrixXd& P = basis.penalty();
  if (residuals.cols() != phi.rows())
    throw DataError("residual curves have " + std::to_string(residuals.cols()) +
                    " points but the score basis grid has " + std::to_string(phi.rows()));
  if (phi.rows() < phi.cols())
    throw DataError("score extraction needs at least as many grid points as basis functions");
  ScoreSet out;
  if (lambda) {
    if (*lambda < 0) throw ConfigError("score smoothing parameter must be nonnegative");
    out.lambda = *lambda;
  } else {
    RemlProblem problem(phi, P, residuals.transpose());
    out.lambda = std::pow(10.0, problem.select_log10_lambda());
  }
  const Eigen::MatrixXd gram = phi.transpose() * phi;
  // One factorization, N right-hand sides.
  const Eigen::MatrixXd solved = solve_penalized(gram, P, out.lambda, phi.transpose());  // J x T
  out.xi = (solved * residuals.transpose()).transpose();
  out.noise = residuals - out.xi * phi.transpose();
  const Eigen::MatrixXd hat = phi * solved;  // T x T
  const Eigen::MatrixXd keep = Eigen::MatrixXd::Identity(hat.rows(), hat.cols()) - hat;
  out.retained_fraction = keep.rowwise().squaredNorm();
  out.projection = solved;
  return out;
}

Eigen::VectorXd estimate_noise_variance(const Eigen::MatrixXd& noise, const CyclicBasis& basis,
                                        const Eigen::VectorXd* retained_fraction) {
  if (noise.rows() < 2) throw DataError("noise variance needs at least two subjects");
  Eigen::VectorXd mean_sq = noise.array().square().colwise().mean().transpose();
  if (retained_fraction) {
    if (retained_fraction->size() != mean_sq.size())
      throw DataError("retained-fraction length does not match the grid");
    mean_sq.array() /= retained_fraction->array().max(1e-3);
  }
  Eigen::VectorXd smoothed = smooth_curve(mean_sq, basis);
  return smoothed.cwiseMax(kNoiseVarianceFloor);
}

Eigen::MatrixXd noise_expectation_operator(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& projection,
                                           const Eigen::MatrixXd& X,
                                           const std::vector<Eigen::MatrixXd>& mean_smoothers) {
  const Eigen::Index T = phi.rows();
  const Eigen::Index P = X.cols();
  const double n = static_cast<double>(X.rows());
  if (projection.rows() != phi.cols() || projection.cols() != T)
    throw DataError("score projection does not match the basis");
  const Eigen::MatrixXd keep = Eigen::MatrixXd::Identity(T, T) - phi * projection;
  if (static_cast<Eigen::Index>(mean_smoothers.size()) != P)
    throw DataError("need one mean smoother per covariate");
  const Eigen::MatrixXd gram = X.transpose() * X;
  const Eigen::MatrixXd W = gram.cwiseProduct(gram.ldlt().solve(Eigen::MatrixXd::Identity(P, P)));
  std::vector<Eigen::MatrixXd> G;
  for (const auto& S : mean_smoothers) {
    if (S.rows() != T || S.cols() != T) throw DataError("mean smoother has the wrong size");
    G.push_back(S - phi * (projection * S));
  }
  Eigen::MatrixXd A = n * keep.cwiseProduct(keep);
  for (Eigen::Index p = 0; p < P; ++p) {
    const auto& Gp = G[static_cast<std::size_t>(p)];
    A -= 2.0 * keep.cwiseProduct(Gp);
    A += W(p, p) * Gp.cwiseProduct(Gp);
    for (Eigen::Index q = p + 1; q < P; ++q)
      A += 2.0 * W(p, q) * Gp.cwiseProduct(G[static_cast<std::size_t>(q)]);
  }
  return A / n;
}

Eigen::VectorXd estimate_noise_variance(const Eigen::MatrixXd& noise, const CyclicBasis& basis,
                                        const Eigen::MatrixXd& expectation) {
  if (noise.rows() < 2) throw DataError("noise variance needs at least two subjects");
  if (expectation.rows() != noise.cols() || expectation.cols() != noise.cols())
    throw DataError("noise expectation operator does not match the grid");
  const Eigen::VectorXd mean_sq = noise.array().square().colwise().mean().transpose();
  const Eigen::VectorXd unbiased = expectation.partialPivLu().solve(mean_sq);
  return smooth_curve(unbiased, basis).cwiseMax(kNoiseVarianceFloor);
}

}  // namespace fmr
