#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fmr/bands.hpp"
#include "fmr/dataset.hpp"
#include "fmr/pipeline.hpp"
#include "fmr/random.hpp"
#include "fmr/surface.hpp"

namespace fmr {

inline constexpr int kSimScores = 5;
inline constexpr int kSimCovariates = 4;

/// beta_0..beta_3 at s in [0, 1].
Eigen::Vector4d true_fixed_effects(double s);
double true_noise_variance(double s);

/// 5 x 5 covariance of the Gaussian copula.
const Eigen::MatrixXd& copula_covariance();
/// How the 20 published score loadings are arranged. Declared reads them row by row into
/// b_ij with i = 0..3 indexing rows; Transposed takes the printed 5 x 4 block as rows j.
enum class LoadingLayout { Declared, Transposed };

/// 5 x 4; row j holds (b_0j, b_1j, b_2j, b_3j).
const Eigen::MatrixXd& loading_matrix(LoadingLayout layout = LoadingLayout::Declared);

enum class ScoreLaw { Transformed, Gaussian };

/// Marginal transform of score j (0-based) applied to a standard normal z.
double score_transform(int j, double z);

/// Unit-variance scores xi* for one subject.
Eigen::VectorXd draw_scaled_scores(Rng& rng, ScoreLaw law = ScoreLaw::Transformed);
/// xi_j = xi*_j exp{(b_0j + sum_i b_ij x_i) / 2} for non-intercept covariates x (3-vector).
Eigen::VectorXd scale_scores(const Eigen::VectorXd& xi_star, const Eigen::VectorXd& x,
                             LoadingLayout layout = LoadingLayout::Declared);
Eigen::VectorXd generate_scores(const Eigen::VectorXd& x, Rng& rng, ScoreLaw law = ScoreLaw::Transformed,
                                LoadingLayout layout = LoadingLayout::Declared);
Eigen::VectorXd generate_scores(const Eigen::VectorXd& x, std::uint64_t seed,
                                ScoreLaw law = ScoreLaw::Transformed,
                                LoadingLayout layout = LoadingLayout::Declared);

struct DGPSpec {
  int N = 100;
  int K = 144;
  std::uint64_t seed = 1;
  ScoreLaw law = ScoreLaw::Transformed;
  LoadingLayout layout = LoadingLayout::Declared;
  bool include_scores = true;
  bool include_noise = true;
};

/// s_k = k / K, k = 1..K.
Eigen::VectorXd simulation_grid(int K);

/// Cubic cyclic basis with 5 knots on [0, 1] carrying the simulated scores.
CyclicBasis simulation_score_basis(const Eigen::VectorXd& grid);

struct SimulatedData {
  FunctionalDataset data;  ///< X columns: intercept, X1, X2, X3
  Eigen::MatrixXd xi;      ///< N x 5 scores used
};

SimulatedData generate_dataset(const DGPSpec& spec);

/// Moments of the unit-variance scores.
struct ScoreMoments {
  ScoreLaw law = ScoreLaw::Transformed;
  Eigen::MatrixXd C;       ///< second moments (= correlation)
  Eigen::VectorXd m3;      ///< one per sorted triple
  Eigen::VectorXd m4;      ///< one per sorted quadruple
  Eigen::VectorXd m3_se;   ///< Monte Carlo standard errors, zero when exact
  Eigen::VectorXd m4_se;
  std::uint64_t seed = 0;
  std::size_t draws = 0;
};

inline constexpr std::uint64_t kTruthSeed = 0x5EED7247A11ULL;
inline constexpr std::size_t kTruthDraws = 1000000;

/// C from two-dimensional Gauss-Hermite quadrature; third and fourth moments from `draws`
/// Monte Carlo draws (exact for the Gaussian law). Results are cached per argument set.
const ScoreMoments& score_moments(ScoreLaw law = ScoreLaw::Transformed,
                                  std::uint64_t seed = kTruthSeed,
                                  std::size_t draws = kTruthDraws);
ScoreMoments compute_score_moments(ScoreLaw law, std::uint64_t seed, std::size_t draws);

/// Probabilists' Gauss-Hermite rule (weights sum to one).
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

/// Parameters of the simulation written as a moment model on `grid`.
MomentModel true_moment_model(const Eigen::VectorXd& grid, const ScoreMoments& moments,
                              LoadingLayout layout = LoadingLayout::Declared);
MomentModel true_moment_model(const Eigen::VectorXd& grid, ScoreLaw law = ScoreLaw::Transformed,
                              LoadingLayout layout = LoadingLayout::Declared);

/// Integral of (fhat - ftrue)^2 by the trapezoid rule. With period > 0 the domain is closed
/// and a final panel joins the last grid point to the first one shifted by the period.
double ise(const Eigen::VectorXd& fhat, const Eigen::VectorXd& ftrue, const Eigen::VectorXd& grid,
           double period = 1.0);

struct ExperimentConfig {
  std::vector<int> sample_sizes{300};
  std::vector<int> grid_sizes{144};
  int replicates = 50;
  /// Bootstrap size; 0 skips bands and records ISE only.
  int B = 100;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  ScoreLaw law = ScoreLaw::Transformed;
  LoadingLayout layout = LoadingLayout::Declared;
  bool fixed_effects = true;  ///< intercept, X1..X3 and noise variance
  bool variance = true;
  bool skewness = false;
  bool kurtosis = false;
  std::vector<Eigen::VectorXd> probes;  ///< full covariate vectors incl. intercept
  PipelineConfig pipeline;
  int threads = 1;
};

/// Probes (1, -10, 0, 0) and (1, 10, 0, 0).
std::vector<Eigen::VectorXd> default_probes();

/// "(-10,0,0)" for the probe (1, -10, 0, 0).
std::string probe_label(const Eigen::VectorXd& probe);

struct CoverageRow {
  std::string method;     ///< "Symmetric CMA", "Asymmetric CMA" or "Wald"
  std::string parameter;  ///< "Intercept", "X1", ..., "Noise Variance", "Variance", ...
  std::string covariate;  ///< probe label, empty for fixed effects and noise variance
  int N = 0;
  double frequency = 0.0;  ///< minutes between grid points, 1440 / K
  double coverage = 0.0;
  int replicates = 0;      ///< replicates that finished
};

struct IseRow {
  std::string parameter;
  std::string covariate;
  int N = 0;
  double frequency = 0.0;
  int replicate = 0;
  double ise = 0.0;
};

struct ExperimentReport {
  std::vector<CoverageRow> coverage;
  std::vector<IseRow> ise;
  std::vector<std::string> failures;
  double seconds = 0.0;
};

/// Replicate r of cell (N, K) uses streams derived from (seed, N, K, r) only.
ExperimentReport run_coverage_experiment(const ExperimentConfig& config);

}  // namespace fmr
