#include "fmr/sim.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

#include "fmr/errors.hpp"
#include "fmr/parallel.hpp"

namespace fmr {
namespace {

constexpr double kPi = std::numbers::pi;

double bump(double scale, double arg) { return scale * (1.0 - std::cos(arg)); }

void check_unit(double s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    std::ostringstream os;
    os << "simulation functions are defined on [0, 1], got s = " << s;
    throw DataError(os.str());
  }
}

// Gamma(a) quantile at Phi(z), switching to the upper tail for z > 0 to keep precision.
double gamma_quantile_at_normal(double a, double z) {
  const double tail = 0.5 * boost::math::erfc(std::abs(z) / std::numbers::sqrt2);
  return z <= 0 ? boost::math::gamma_p_inv(a, tail) : boost::math::gamma_q_inv(a, tail);
}

struct Marginal {
  double shape;  // 0 for Gaussian
  bool negated;
};
constexpr Marginal kMarginals[kSimScores] = {{3, true}, {50, false}, {20, true}, {0, false}, {4, false}};

}  // namespace

Eigen::Vector4d true_fixed_effects(double s) {
  check_unit(s);
  Eigen::Vector4d b;
  b[0] = 2.5 - 1.8 * std::exp(2.0 * (1.0 - std::cos((2.0 * s - 5.0 / 18.0) * kPi)));

  if (s >= 1.0 / 3.0)
    b[1] = 0.005 - bump(0.01, (3.0 * s - 1.0) * kPi / 2.0);
  else
    b[1] = 0.005 - bump(0.01, (3.0 * s - 1.0) * kPi);

  // The last pieces of beta_2 and beta_3 are closed at s = 1.
  if (s < 5.0 / 24.0)
    b[2] = 0.1 - bump(0.125, (s + 1.0 / 6.0) * kPi / (3.0 / 8.0));
  else if (s < 5.0 / 12.0)
    b[2] = 0.1 - bump(0.125, (s - 5.0 / 12.0) * kPi / (5.0 / 24.0));
  else if (s < 5.0 / 6.0)
    b[2] = 0.1;
  else
    b[2] = 0.1 - bump(0.125, (s - 5.0 / 6.0) * kPi / (29.0 / 24.0));

  if (s < 1.0 / 8.0)
    b[3] = 0.02 - bump(0.125, (s - 1.0 / 8.0) * kPi / (5.0 / 6.0));
  else if (s < 7.0 / 24.0)
    b[3] = 0.02 - bump(0.125, (s - 1.0 / 8.0) * kPi / (1.0 / 6.0));
  else
    b[3] = -0.23 + bump(0.125, (s - 7.0 / 24.0) * kPi / (5.0 / 6.0));
  return b;
}

double true_noise_variance(double s) {
  check_unit(s);
  return 0.1 + 0.35 * std::exp(-4.0 * (1.0 - std::cos((2.0 * s - 0.5) * kPi))) +
         0.25 * std::exp(-4.0 * (1.0 - std::cos(2.0 * s * kPi)));
}

const Eigen::MatrixXd& copula_covariance() {
  static const Eigen::MatrixXd S = [] {
    Eigen::MatrixXd m(5, 5);
    m << 1, -0.4, 0.7, -0.4, -0.2,
        -0.4, 1, -0.4, 0.5, -0.1,
        0.7, -0.4, 1, -0.5, 0.1,
        -0.4, 0.5, -0.5, 1, -0.5,
        -0.2, -0.1, 0.1, -0.5, 1;
    return m;
  }();
  return S;
}

const Eigen::MatrixXd& loading_matrix(LoadingLayout layout) {
  // The 20 published loadings in print order.
  static const double printed[20] = {-0.2, -0.009, -0.04, -0.07, -0.01, -0.05, -0.1, -0.06, -0.03, 0.2,
                                     0.1, -0.005, 0.01, -0.8, -0.006, -0.2, -1, -0.003, 0.02, -0.02};
  static const Eigen::MatrixXd transposed = [] {
    // printed as 5 rows (j) by 4 columns (i)
    return Eigen::MatrixXd(Eigen::Map<const Eigen::Matrix<double, 5, 4, Eigen::RowMajor>>(printed));
  }();
  static const Eigen::MatrixXd declared = [] {
    // b_ij with rows i = 0..3 and columns j = 1..5, read row by row
    return Eigen::MatrixXd(Eigen::Map<const Eigen::Matrix<double, 4, 5, Eigen::RowMajor>>(printed).transpose());
  }();
  return layout == LoadingLayout::Transposed ? transposed : declared;
}

namespace {

const Eigen::MatrixXd& copula_factor() {
  static const Eigen::MatrixXd L = [] {
    Eigen::LLT<Eigen::MatrixXd> llt(copula_covariance());
    if (llt.info() != Eigen::Success) throw NumericError("copula covariance is not positive definite");
    return Eigen::MatrixXd(llt.matrixL());
  }();
  return L;
}

}  // namespace

double score_transform(int j, double z) {
  if (j < 0 || j >= kSimScores) throw ConfigError("score index out of range");
  const Marginal& m = kMarginals[j];
  if (m.shape == 0) return z;
  const double a = m.shape;
  if (m.negated) return -(gamma_quantile_at_normal(a, -z) - a) / std::sqrt(a);
  return (gamma_quantile_at_normal(a, z) - a) / std::sqrt(a);
}

Eigen::VectorXd draw_scaled_scores(Rng& rng, ScoreLaw law) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(kSimScores);
  for (int j = 0; j < kSimScores; ++j) z[j] = normal(rng);
  Eigen::VectorXd g = copula_factor() * z;
  if (law == ScoreLaw::Gaussian) return g;
  for (int j = 0; j < kSimScores; ++j) g[j] = score_transform(j, g[j]);
  return g;
}

Eigen::VectorXd scale_scores(const Eigen::VectorXd& xi_star, const Eigen::VectorXd& x, LoadingLayout layout) {
  if (xi_star.size() != kSimScores || x.size() != kSimCovariates - 1)
    throw ConfigError("scale_scores expects 5 scores and 3 covariates");
  const Eigen::MatrixXd& B = loading_matrix(layout);
  const Eigen::VectorXd lin = B.col(0) + B.rightCols(3) * x;
  return xi_star.array() * (0.5 * lin.array()).exp();
}

Eigen::VectorXd generate_scores(const Eigen::VectorXd& x, Rng& rng, ScoreLaw law, LoadingLayout layout) {
  return scale_scores(draw_scaled_scores(rng, law), x, layout);
}

Eigen::VectorXd generate_scores(const Eigen::VectorXd& x, std::uint64_t seed, ScoreLaw law,
                                LoadingLayout layout) {
  Rng rng = make_stream(seed, {});
  return generate_scores(x, rng, law, layout);
}

Eigen::VectorXd simulation_grid(int K) {
  if (K < 1) throw ConfigError("grid size K must be positive");
  Eigen::VectorXd s(K);
  for (int k = 0; k < K; ++k) s[k] = static_cast<double>(k + 1) / K;
  return s;
}

CyclicBasis simulation_score_basis(const Eigen::VectorXd& grid) {
  return build_cyclic_basis(3, Interval{0.0, 1.0}, kSimScores,
                            std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size())));
}

SimulatedData generate_dataset(const DGPSpec& spec) {
  if (spec.N < 1) throw ConfigError("N must be positive");
  const Eigen::VectorXd grid = simulation_grid(spec.K);
  const CyclicBasis basis = simulation_score_basis(grid);
  const Eigen::Index T = grid.size();

  Eigen::MatrixXd beta(kSimCovariates, T);
  Eigen::VectorXd noise_sd(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    beta.col(t) = true_fixed_effects(grid[t]);
    noise_sd[t] = std::sqrt(true_noise_variance(grid[t]));
  }

  SimulatedData out;
  FunctionalDataset& d = out.data;
  d.grid = grid;
  d.covariate_names = {"intercept", "X1", "X2", "X3"};
  d.X.resize(spec.N, kSimCovariates);
  out.xi = Eigen::MatrixXd::Zero(spec.N, kSimScores);
  Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(spec.N, T);

  Rng rng = make_stream(spec.seed, {0});
  std::uniform_real_distribution<double> unif(-30.0, 30.0);
  std::bernoulli_distribution half(0.5), third(0.3);
  std::normal_distribution<double> normal;
  for (int i = 0; i < spec.N; ++i) {
    const double x2 = unif(rng);
    const double x3 = half(rng) ? 1.0 : 0.0;
    const double x4 = third(rng) ? 1.0 : 0.0;
    d.X.row(i) << 1.0, x2, x3, x4;
    if (spec.include_scores) {
      Eigen::VectorXd x(3);
      x << x2, x3, x4;
      out.xi.row(i) = generate_scores(x, rng, spec.law, spec.layout).transpose();
    }
    if (spec.include_noise)
      for (Eigen::Index t = 0; t < T; ++t) eps(i, t) = noise_sd[t] * normal(rng);
  }
  d.Y = d.X * beta + out.xi * basis.design().transpose() + eps;
  return out;
}

void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw ConfigError("Gauss-Hermite rule needs at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes = es.eigenvalues();
  weights = es.eigenvectors().row(0).transpose().array().square();
}

ScoreMoments compute_score_moments(ScoreLaw law, std::uint64_t seed, std::size_t draws) {
  const auto triples = sorted_tuples<3>(kSimScores);
  const auto quads = sorted_tuples<4>(kSimScores);
  ScoreMoments m;
  m.law = law;
  m.seed = seed;
  const Eigen::MatrixXd& S = copula_covariance();

  if (law == ScoreLaw::Gaussian) {
    m.C = S;
    m.m3 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(triples.size()));
    m.m4.resize(static_cast<Eigen::Index>(quads.size()));
    for (std::size_t q = 0; q < quads.size(); ++q) {
      const auto& i = quads[q].idx;
      m.m4[static_cast<Eigen::Index>(q)] =
          S(i[0], i[1]) * S(i[2], i[3]) + S(i[0], i[2]) * S(i[1], i[3]) + S(i[0], i[3]) * S(i[1], i[2]);
    }
    m.m3_se = Eigen::VectorXd::Zero(m.m3.size());
    m.m4_se = Eigen::VectorXd::Zero(m.m4.size());
    return m;
  }

  // Second moments: E g_j(Z1) g_k(rho Z1 + sqrt(1 - rho^2) Z2) by tensor Gauss-Hermite.
  Eigen::VectorXd z, w;
  gauss_hermite(120, z, w);
  m.C = Eigen::MatrixXd::Identity(kSimScores, kSimScores);
  for (int j = 0; j < kSimScores; ++j) {
    double diag = 0;
    for (Eigen::Index a = 0; a < z.size(); ++a) diag += w[a] * std::pow(score_transform(j, z[a]), 2);
    m.C(j, j) = diag;
    for (int k = j + 1; k < kSimScores; ++k) {
      const double rho = S(j, k);
      const double c = std::sqrt(1.0 - rho * rho);
      double acc = 0;
      for (Eigen::Index a = 0; a < z.size(); ++a) {
        double inner = 0;
        for (Eigen::Index b = 0; b < z.size(); ++b) inner += w[b] * score_transform(k, rho * z[a] + c * z[b]);
        acc += w[a] * score_transform(j, z[a]) * inner;
      }
      m.C(j, k) = m.C(k, j) = acc;
    }
  }

  if (draws < 2) throw ConfigError("Monte Carlo moments need at least two draws");
  m.draws = draws;
  const auto n3 = static_cast<Eigen::Index>(triples.size());
  const auto n4 = static_cast<Eigen::Index>(quads.size());
  Eigen::VectorXd s3 = Eigen::VectorXd::Zero(n3), ss3 = Eigen::VectorXd::Zero(n3);
  Eigen::VectorXd s4 = Eigen::VectorXd::Zero(n4), ss4 = Eigen::VectorXd::Zero(n4);
  Rng rng = make_stream(seed, {static_cast<std::uint64_t>(law)});
  for (std::size_t r = 0; r < draws; ++r) {
    const Eigen::VectorXd g = draw_scaled_scores(rng, law);
    for (Eigen::Index t = 0; t < n3; ++t) {
      const auto& i = triples[static_cast<std::size_t>(t)].idx;
      const double v = g[i[0]] * g[i[1]] * g[i[2]];
      s3[t] += v;
      ss3[t] += v * v;
    }
    for (Eigen::Index q = 0; q < n4; ++q) {
      const auto& i = quads[static_cast<std::size_t>(q)].idx;
      const double v = g[i[0]] * g[i[1]] * g[i[2]] * g[i[3]];
      s4[q] += v;
      ss4[q] += v * v;
    }
  }
  const double n = static_cast<double>(draws);
  m.m3 = s3 / n;
  m.m4 = s4 / n;
  m.m3_se = ((ss3 / n - m.m3.cwiseProduct(m.m3)).cwiseMax(0.0) / (n - 1)).cwiseSqrt();
  m.m4_se = ((ss4 / n - m.m4.cwiseProduct(m.m4)).cwiseMax(0.0) / (n - 1)).cwiseSqrt();
  return m;
}

const ScoreMoments& score_moments(ScoreLaw law, std::uint64_t seed, std::size_t draws) {
  static std::mutex mutex;
  static std::map<std::tuple<int, std::uint64_t, std::size_t>, std::unique_ptr<ScoreMoments>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{static_cast<int>(law), seed, draws}];
  if (!slot) slot = std::make_unique<ScoreMoments>(compute_score_moments(law, seed, draws));
  return *slot;
}

MomentModel true_moment_model(const Eigen::VectorXd& grid, const ScoreMoments& moments,
                              LoadingLayout layout) {
  MomentModel m;
  m.basis = simulation_score_basis(grid);
  const Eigen::Index T = grid.size();
  m.beta.resize(kSimCovariates, T);
  m.sigma2_eps.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    m.beta.col(t) = true_fixed_effects(grid[t]);
    m.sigma2_eps[t] = true_noise_variance(grid[t]);
  }
  m.variance.gamma = loading_matrix(layout).transpose();
  m.correlation.C = moments.C;

  m.third.triples = sorted_tuples<3>(kSimScores);
  m.third.delta = Eigen::MatrixXd::Zero(kSimCovariates, static_cast<Eigen::Index>(m.third.triples.size()));
  m.third.delta.row(0) = moments.m3.transpose();

  m.fourth.quads = sorted_tuples<4>(kSimScores);
  const auto n4 = static_cast<Eigen::Index>(m.fourth.quads.size());
  m.fourth.eta = Eigen::MatrixXd::Zero(kSimCovariates, n4);
  m.fourth.log_link.resize(static_cast<std::size_t>(n4));
  for (Eigen::Index q = 0; q < n4; ++q) {
    const bool log_link = even_multiplicity(m.fourth.quads[static_cast<std::size_t>(q)].idx);
    m.fourth.log_link[static_cast<std::size_t>(q)] = log_link;
    m.fourth.eta(0, q) = log_link ? std::log(moments.m4[q]) : moments.m4[q];
  }
  return m;
}

MomentModel true_moment_model(const Eigen::VectorXd& grid, ScoreLaw law, LoadingLayout layout) {
  return true_moment_model(grid, score_moments(law), layout);
}

double ise(const Eigen::VectorXd& fhat, const Eigen::VectorXd& ftrue, const Eigen::VectorXd& grid,
           double period) {
  if (fhat.size() != ftrue.size() || fhat.size() != grid.size())
    throw DataError("ise: curve lengths " + std::to_string(fhat.size()) + ", " +
                    std::to_string(ftrue.size()) + " and grid length " + std::to_string(grid.size()) +
                    " differ");
  const Eigen::Index T = grid.size();
  if (T == 0) return 0.0;
  const Eigen::VectorXd d2 = (fhat - ftrue).array().square();
  double total = 0;
  for (Eigen::Index t = 0; t + 1 < T; ++t) total += 0.5 * (grid[t + 1] - grid[t]) * (d2[t] + d2[t + 1]);
  if (period > 0) total += 0.5 * (grid[0] + period - grid[T - 1]) * (d2[T - 1] + d2[0]);
  return total;
}

std::vector<Eigen::VectorXd> default_probes() {
  Eigen::VectorXd lo(4), hi(4);
  lo << 1, -10, 0, 0;
  hi << 1, 10, 0, 0;
  return {lo, hi};
}

std::string probe_label(const Eigen::VectorXd& probe) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 1; i < probe.size(); ++i) os << (i > 1 ? "," : "") << probe[i];
  os << ")";
  return os.str();
}

namespace {

struct NamedTarget {
  TargetSpec spec;
  std::string parameter;
  std::string covariate;
};

std::vector<NamedTarget> experiment_targets(const ExperimentConfig& c) {
  std::vector<NamedTarget> out;
  if (c.fixed_effects) {
    const char* names[] = {"Intercept", "X1", "X2", "X3"};
    for (int p = 0; p < kSimCovariates; ++p) out.push_back({TargetSpec::beta(p), names[p], ""});
    out.push_back({TargetSpec::noise_variance(), "Noise Variance", ""});
  }
  const auto probes = c.probes.empty() ? default_probes() : c.probes;
  for (const auto& x : probes) {
    if (x.size() != kSimCovariates) throw ConfigError("probes must have 4 entries including the intercept");
    if (c.variance) out.push_back({TargetSpec::variance(x), "Variance", probe_label(x)});
    if (c.skewness) out.push_back({TargetSpec::skewness(x), "Skewness", probe_label(x)});
    if (c.kurtosis) out.push_back({TargetSpec::kurtosis(x), "Kurtosis", probe_label(x)});
  }
  return out;
}

struct ReplicateOutcome {
  std::string failure;
  std::vector<double> ise;
  std::vector<std::array<double, 3>> covered;  // symmetric, asymmetric, wald
};

double covered_fraction(const BandResult& band, const Eigen::VectorXd& truth, bool simultaneous) {
  const Eigen::Index T = truth.size();
  Eigen::Index hits = 0;
  for (Eigen::Index t = 0; t < T; ++t)
    if (band.lower[t] <= truth[t] && truth[t] <= band.upper[t]) ++hits;
  if (simultaneous) return hits == T ? 1.0 : 0.0;
  return static_cast<double>(hits) / static_cast<double>(T);
}

}  // namespace

ExperimentReport run_coverage_experiment(const ExperimentConfig& config) {
  if (config.replicates < 1) throw ConfigError("replicates must be at least 1");
  if (config.B != 0 && config.B < minimum_replicates(config.alpha))
    throw ConfigError("B = " + std::to_string(config.B) + " is below the minimum " +
                      std::to_string(minimum_replicates(config.alpha)) + " for alpha " +
                      std::to_string(config.alpha));
  const auto start = std::chrono::steady_clock::now();
  const std::vector<NamedTarget> targets = experiment_targets(config);
  if (targets.empty()) throw ConfigError("the experiment has no targets");
  std::vector<TargetSpec> specs;
  FitDepth depth = FitDepth::Mean;
  for (const auto& t : targets) {
    specs.push_back(t.spec);
    if (static_cast<int>(t.spec.depth()) > static_cast<int>(depth)) depth = t.spec.depth();
  }
  const char* methods[] = {"Symmetric CMA", "Asymmetric CMA", "Wald"};

  ExperimentReport report;
  for (int K : config.grid_sizes) {
    const Eigen::VectorXd grid = simulation_grid(K);
    const Pipeline pipeline(config.pipeline, grid);
    PipelineFit truth_fit;
    truth_fit.depth = FitDepth::Moments;
    truth_fit.model = true_moment_model(grid, config.law, config.layout);
    std::vector<Eigen::VectorXd> truth;
    for (const auto& t : targets) truth.push_back(t.spec.evaluate(truth_fit));
    const double frequency = 1440.0 / K;

    for (int N : config.sample_sizes) {
      std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(config.replicates));
      parallel_for(outcomes.size(), config.threads, [&](std::size_t r) {
        ReplicateOutcome& out = outcomes[r];
        const std::uint64_t rs = derive_seed(
            config.seed, {static_cast<std::uint64_t>(N), static_cast<std::uint64_t>(K), r});
        try {
          DGPSpec spec;
          spec.N = N;
          spec.K = K;
          spec.seed = derive_seed(rs, {0});
          spec.law = config.law;
          spec.layout = config.layout;
          const SimulatedData sim = generate_dataset(spec);
          const PipelineFit fit = pipeline.fit(sim.data, depth);
          std::vector<Eigen::VectorXd> estimates;
          for (std::size_t t = 0; t < targets.size(); ++t) {
            estimates.push_back(specs[t].evaluate(fit));
            out.ise.push_back(ise(estimates.back(), truth[t], grid));
          }
          if (config.B > 0) {
            const auto ensembles = bootstrap_pipeline(sim.data, pipeline, config.B, derive_seed(rs, {1}), specs, 1);
            for (std::size_t t = 0; t < targets.size(); ++t) {
              const auto sym = cma_band(ensembles[t], estimates[t], config.alpha, true);
              const auto asym = cma_band(ensembles[t], estimates[t], config.alpha, false);
              const auto wald = wald_band(ensembles[t], estimates[t], config.alpha);
              out.covered.push_back({covered_fraction(sym, truth[t], true),
                                     covered_fraction(asym, truth[t], true),
                                     covered_fraction(wald, truth[t], false)});
            }
          }
        } catch (const std::runtime_error& e) {
          out.failure = "N=" + std::to_string(N) + " K=" + std::to_string(K) + " replicate " +
                        std::to_string(r) + ": " + e.what();
          out.ise.clear();
          out.covered.clear();
        }
      });

      int finished = 0;
      for (std::size_t r = 0; r < outcomes.size(); ++r) {
        const auto& o = outcomes[r];
        if (!o.failure.empty()) {
          report.failures.push_back(o.failure);
          continue;
        }
        ++finished;
        for (std::size_t t = 0; t < targets.size(); ++t)
          report.ise.push_back({targets[t].parameter, targets[t].covariate, N, frequency,
                                static_cast<int>(r), o.ise[t]});
      }
      if (config.B == 0) continue;
      for (std::size_t t = 0; t < targets.size(); ++t) {
        for (int m = 0; m < 3; ++m) {
          double sum = 0;
          for (const auto& o : outcomes)
            if (o.failure.empty()) sum += o.covered[t][static_cast<std::size_t>(m)];
          CoverageRow row;
          row.method = methods[m];
          row.parameter = targets[t].parameter;
          row.covariate = targets[t].covariate;
          row.N = N;
          row.frequency = frequency;
          row.coverage = finished > 0 ? sum / finished : std::nan("");
          row.replicates = finished;
          report.coverage.push_back(row);
        }
      }
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace fmr
