#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fmr/dataset.hpp"
#include "fmr/parallel.hpp"
#include "fmr/pipeline.hpp"
#include "fmr/sim.hpp"
#include "fmr/surface.hpp"

namespace fmr {

/// Everything a command can be configured with. Config files set these by key; command line
/// flags override them.
struct RunConfig {
  // basis and pipeline
  int degree = 3;
  int knots = 40;
  int score_knots = 5;
  double domain_lo = 0.0;
  double domain_hi = 1.0;
  bool eigenmodel = false;
  bool bias_correction = true;
  // data handling
  std::string transform = "none";  ///< none | log1p
  std::vector<std::string> center;  ///< covariate names to center
  std::filesystem::path y, x, grid, fit;
  // bootstrap
  int B = 100;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int threads = default_thread_count();
  std::string target = "variance";
  Eigen::VectorXd probe, probe2;
  std::filesystem::path out = ".";
  // simulate
  int N = 100;
  int K = 144;
  std::string law = "transformed";  ///< transformed | gaussian
  std::string loadings = "declared";  ///< declared | transposed
  // coverage
  std::vector<int> sample_sizes{300};
  std::vector<int> grid_sizes{144};
  int replicates = 50;
  bool fixed_effects = true;
  bool variance = true;
  bool skewness = false;
  bool kurtosis = false;
  std::vector<Eigen::VectorXd> probes;

  PipelineConfig pipeline() const;
  /// Stable text form used for hashing.
  std::string canonical() const;
};

/// Unknown keys throw ConfigError listing every offending name.
RunConfig parse_run_config(const std::map<std::string, std::string>& kv);
RunConfig load_run_config(const std::filesystem::path& path);
std::vector<std::string> run_config_keys();

/// Reads Y/X/grid CSVs, checks their shapes, applies the transform and centering.
/// Means removed by centering are returned through `center_means`.
FunctionalDataset load_dataset(const RunConfig& config, std::map<std::string, double>* center_means = nullptr);

/// log(1 + y) cell-wise; throws DataError on a cell <= -1.
void apply_log1p(Eigen::MatrixXd& Y);

struct LoadedFit {
  MomentModel model;
  std::vector<std::string> covariate_names;
  RunConfig config;  ///< settings recorded in the manifest
};

/// Rebuilds the moment model from the artifacts cmd_fit wrote to `dir`.
LoadedFit load_fit_artifacts(const std::filesystem::path& dir);

void cmd_simulate(const RunConfig& config);
void cmd_fit(const RunConfig& config);
void cmd_bands(const RunConfig& config);
/// Returns the report; coverage.csv and ise.csv go to config.out.
ExperimentReport cmd_coverage(const RunConfig& config);

ExperimentConfig experiment_config(const RunConfig& config);

/// Full command line front end; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace fmr
