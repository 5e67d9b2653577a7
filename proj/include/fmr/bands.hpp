#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fmr/dataset.hpp"
#include "fmr/pipeline.hpp"

namespace fmr {

/// A functional quantity derived from a pipeline fit.
struct TargetSpec {
  enum class Kind { Beta, NoiseVariance, Mean, Variance, LagCorrelation, Skewness, Kurtosis, VarianceRatio };
  Kind kind = Kind::Beta;
  Eigen::Index coefficient = 0;  ///< Beta: row of beta
  Eigen::VectorXd x;             ///< probe covariate vector
  Eigen::VectorXd x2;            ///< VarianceRatio denominator probe
  double lag = 0.0;              ///< LagCorrelation, domain units

  static TargetSpec beta(Eigen::Index p);
  static TargetSpec noise_variance();
  static TargetSpec mean(Eigen::VectorXd x);
  static TargetSpec variance(Eigen::VectorXd x);
  static TargetSpec lag_correlation(Eigen::VectorXd x, double lag);
  static TargetSpec skewness(Eigen::VectorXd x);
  static TargetSpec kurtosis(Eigen::VectorXd x);
  static TargetSpec variance_ratio(Eigen::VectorXd x1, Eigen::VectorXd x2);

  std::string label() const;
  FitDepth depth() const;
  Eigen::VectorXd evaluate(const PipelineFit& fit) const;
};

/// Parses "beta:0", "noise_variance", "mean", "variance", "skewness", "kurtosis",
/// "correlation:LAG", "variance_ratio"; probes are supplied separately.
TargetSpec parse_target(const std::string& text, const Eigen::VectorXd& x, const Eigen::VectorXd& x2);

struct BootstrapEnsemble {
  std::string target;
  Eigen::MatrixXd samples;  ///< B x T
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;       ///< square root of the bootstrap variance (1/B, centered at mean)
  std::uint64_t seed = 0;

  Eigen::Index replicates() const { return samples.rows(); }
};

/// Fills mean and sd from samples.
BootstrapEnsemble make_ensemble(std::string target, Eigen::MatrixXd samples, std::uint64_t seed = 0);

/// Maximum redraws of one replicate whose resample has a rank-deficient design.
inline constexpr int kMaxResampleAttempts = 10;

/// Subject-level nonparametric bootstrap. Replicate b draws from a stream derived from
/// (seed, b, attempt) only, so results do not depend on the thread count.
std::vector<BootstrapEnsemble> bootstrap_pipeline(const FunctionalDataset& data,
                                                  const Pipeline& pipeline, int B,
                                                  std::uint64_t seed,
                                                  const std::vector<TargetSpec>& targets,
                                                  int threads = 1);

enum class BandKind { Wald, CmaSymmetric, CmaAsymmetric };
std::string to_string(BandKind kind);

/// Band [estimate - q_hi * sd, estimate - q_lo * sd].
struct BandResult {
  Eigen::VectorXd estimate, lower, upper;
  BandKind kind = BandKind::Wald;
  double alpha = 0.05;
  double q_lo = 0.0, q_hi = 0.0;
  /// Locations with zero bootstrap SD, where the band collapses to the estimate.
  std::vector<Eigen::Index> collapsed;
};

/// Inverse-CDF (type 1) empirical quantile: the ceil(p n)-th order statistic.
double empirical_quantile(std::vector<double> values, double p);

/// Smallest B for which the alpha/2 and 1 - alpha/2 quantiles are defined.
int minimum_replicates(double alpha);

double normal_quantile(double p);

BandResult wald_band(const BootstrapEnsemble& ensemble, const Eigen::VectorXd& estimate, double alpha);
BandResult cma_band(const BootstrapEnsemble& ensemble, const Eigen::VectorXd& estimate, double alpha,
                    bool symmetric);

}  // namespace fmr
