#pragma once

#include <optional>

#include "fmr/basis.hpp"
#include "fmr/dataset.hpp"
#include "fmr/fosr.hpp"
#include "fmr/scores.hpp"
#include "fmr/surface.hpp"

namespace fmr {

struct PipelineConfig {
  int degree = 3;
  Interval domain{0.0, 1.0};
  /// Knots of the basis that smooths coefficient functions and the noise variance.
  int smooth_knots = 40;
  /// Knots (= J) of the basis that carries the subject-level scores.
  int score_knots = 5;
  bool eigenmodel = false;
  /// Fixed score smoothing parameter; REML on the stacked residuals when unset.
  std::optional<double> score_lambda;
  /// Moment corrections for what the mean and score fits do to the noise and the scores:
  /// the noise variance goes through noise_expectation_operator, the variance GLM gets the
  /// carried noise as a floor, and C is solved with ScoreContamination.
  bool bias_correction = true;
};

/// How far down the sequence a fit needs to go.
/// How far Pipeline::fit goes. SecondOrder stops after the variance and correlation models.
enum class FitDepth { Mean = 0, Noise = 1, SecondOrder = 2, Moments = 3 };

struct PipelineFit {
  FitDepth depth = FitDepth::Moments;
  FoSRFit fosr;
  ScoreSet scores;   ///< empty when depth == Mean
  MomentModel model; ///< beta always set; sigma2_eps from Noise on; the rest at Moments
};

/// Sequential moment regression: FoSR, score extraction, noise variance, score moments.
/// The two bases are built once for a given grid and reused for every fit.
class Pipeline {
 public:
  Pipeline(const PipelineConfig& config, const Eigen::VectorXd& grid);

  PipelineFit fit(const FunctionalDataset& data, FitDepth depth = FitDepth::Moments) const;

  const PipelineConfig& config() const { return config_; }
  const CyclicBasis& smoothing_basis() const { return smoothing_; }
  const CyclicBasis& score_basis() const { return scores_; }

 private:
  PipelineConfig config_;
  CyclicBasis smoothing_;
  CyclicBasis scores_;
};

}  // namespace fmr
