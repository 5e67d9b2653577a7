#include "fmr/pipeline.hpp"

#include <span>

#include "fmr/errors.hpp"
#include "fmr/momentfit.hpp"
#include "fmr/smooth.hpp"

namespace fmr {

Pipeline::Pipeline(const PipelineConfig& config, const Eigen::VectorXd& grid)
    : config_(config),
      smoothing_(config.degree, config.domain, config.smooth_knots,
                 std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size()))),
      scores_(config.degree, config.domain, config.score_knots,
              std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size()))) {}

PipelineFit Pipeline::fit(const FunctionalDataset& data, FitDepth depth) const {
  validate(data);
  if (data.grid.size() != smoothing_.grid().size() || data.grid != smoothing_.grid())
    throw DataError("dataset grid differs from the pipeline grid");
  PipelineFit out;
  out.depth = depth;
  out.fosr = fit_fosr(data, smoothing_);
  out.model.basis = scores_;
  out.model.beta = out.fosr.beta_smooth;
  if (depth == FitDepth::Mean) return out;

  out.scores = extract_scores(out.fosr.residuals, scores_, config_.score_lambda);
  if (config_.bias_correction) {
    std::vector<Eigen::MatrixXd> smoothers;
    for (Eigen::Index p = 0; p < data.covariates(); ++p)
      smoothers.push_back(smoother_matrix(smoothing_.design(), smoothing_.penalty(), out.fosr.lambdas[p]));
    const Eigen::MatrixXd A = noise_expectation_operator(scores_.design(), out.scores.projection, data.X, smoothers);
    out.scores.sigma2_eps = estimate_noise_variance(out.scores.noise, smoothing_, A);
  } else {
    out.scores.sigma2_eps = estimate_noise_variance(out.scores.noise, smoothing_);
  }
  out.model.sigma2_eps = out.scores.sigma2_eps;
  if (depth == FitDepth::Noise) return out;

  ScaledScores scaled;
  if (config_.bias_correction) {
    // Noise the score projection carries into the scores, and scores the mean fit mixes.
    const Eigen::MatrixXd& proj = out.scores.projection;
    ScoreContamination carried;
    carried.noise = proj * out.scores.sigma2_eps.asDiagonal() * proj.transpose();
    carried.hat = data.X * out.fosr.design_pinv;
    const Eigen::VectorXd floor = carried.noise.diagonal();
    out.model.variance = fit_variance_model(out.scores.xi, data.X, &floor);
    scaled = scale_and_correlate(out.scores.xi, data.X, out.model.variance, &carried);
  } else {
    out.model.variance = fit_variance_model(out.scores.xi, data.X);
    scaled = scale_and_correlate(out.scores.xi, data.X, out.model.variance);
  }
  out.model.correlation.C = scaled.C;
  if (config_.eigenmodel)
    out.model.correlation.eigen = fit_correlation_eigenmodel(scaled.xi_star, data.X);
  if (depth == FitDepth::SecondOrder) return out;
  out.model.third = fit_third_moments(scaled.xi_star, data.X);
  out.model.fourth = fit_fourth_moments(scaled.xi_star, data.X);
  return out;
}

}  // namespace fmr
