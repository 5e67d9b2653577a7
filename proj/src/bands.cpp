#include "fmr/bands.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fmr/errors.hpp"
#include "fmr/parallel.hpp"
#include "fmr/random.hpp"

namespace fmr {
namespace {

std::string format_vector(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

}  // namespace

TargetSpec TargetSpec::beta(Eigen::Index p) {
  TargetSpec t;
  t.kind = Kind::Beta;
  t.coefficient = p;
  return t;
}
TargetSpec TargetSpec::noise_variance() {
  TargetSpec t;
  t.kind = Kind::NoiseVariance;
  return t;
}
TargetSpec TargetSpec::mean(Eigen::VectorXd x) {
  TargetSpec t;
  t.kind = Kind::Mean;
  t.x = std::move(x);
  return t;
}
TargetSpec TargetSpec::variance(Eigen::VectorXd x) {
  TargetSpec t;
  t.kind = Kind::Variance;
  t.x = std::move(x);
  return t;
}
TargetSpec TargetSpec::lag_correlation(Eigen::VectorXd x, double lag) {
  TargetSpec t;
  t.kind = Kind::LagCorrelation;
  t.x = std::move(x);
  t.lag = lag;
  return t;
}
TargetSpec TargetSpec::skewness(Eigen::VectorXd x) {
  TargetSpec t;
  t.kind = Kind::Skewness;
  t.x = std::move(x);
  return t;
}
TargetSpec TargetSpec::kurtosis(Eigen::VectorXd x) {
  TargetSpec t;
  t.kind = Kind::Kurtosis;
  t.x = std::move(x);
  return t;
}
TargetSpec TargetSpec::variance_ratio(Eigen::VectorXd x1, Eigen::VectorXd x2) {
  TargetSpec t;
  t.kind = Kind::VarianceRatio;
  t.x = std::move(x1);
  t.x2 = std::move(x2);
  return t;
}

std::string TargetSpec::label() const {
  switch (kind) {
    case Kind::Beta: return "beta:" + std::to_string(coefficient);
    case Kind::NoiseVariance: return "noise_variance";
    case Kind::Mean: return "mean" + format_vector(x);
    case Kind::Variance: return "variance" + format_vector(x);
    case Kind::LagCorrelation: {
      std::ostringstream os;
      os << "correlation:" << lag << format_vector(x);
      return os.str();
    }
    case Kind::Skewness: return "skewness" + format_vector(x);
    case Kind::Kurtosis: return "kurtosis" + format_vector(x);
    case Kind::VarianceRatio: return "variance_ratio" + format_vector(x) + "/" + format_vector(x2);
  }
  return "unknown";
}

FitDepth TargetSpec::depth() const {
  switch (kind) {
    case Kind::Beta:
    case Kind::Mean: return FitDepth::Mean;
    case Kind::NoiseVariance: return FitDepth::Noise;
    case Kind::Variance:
    case Kind::LagCorrelation:
    case Kind::VarianceRatio: return FitDepth::SecondOrder;
    default: return FitDepth::Moments;
  }
}

Eigen::VectorXd TargetSpec::evaluate(const PipelineFit& fit) const {
  if (static_cast<int>(fit.depth) < static_cast<int>(depth()))
    throw ConfigError("target " + label() + " needs a deeper pipeline fit");
  const MomentModel& m = fit.model;
  switch (kind) {
    case Kind::Beta:
      if (coefficient < 0 || coefficient >= m.beta.rows())
        throw ConfigError("beta index " + std::to_string(coefficient) + " out of range");
      return m.beta.row(coefficient).transpose();
    case Kind::NoiseVariance: return m.sigma2_eps;
    case Kind::Mean: return mean_curve(m, x);
    case Kind::Variance: return variance_curve(m, x);
    case Kind::LagCorrelation: return lag_correlation_curve(m, x, lag);
    case Kind::Skewness: return skewness_curve(m, x);
    case Kind::Kurtosis: return kurtosis_curve(m, x);
    case Kind::VarianceRatio: return variance_ratio_curve(m, x, x2);
  }
  throw ConfigError("unknown target kind");
}

TargetSpec parse_target(const std::string& text, const Eigen::VectorXd& x, const Eigen::VectorXd& x2) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto need_probe = [&](const Eigen::VectorXd& v) {
    if (v.size() == 0) throw ConfigError("target '" + text + "' needs a covariate probe");
    return v;
  };
  try {
    if (head == "beta") return TargetSpec::beta(arg.empty() ? 0 : std::stol(arg));
    if (head == "noise_variance") return TargetSpec::noise_variance();
    if (head == "mean") return TargetSpec::mean(need_probe(x));
    if (head == "variance") return TargetSpec::variance(need_probe(x));
    if (head == "skewness") return TargetSpec::skewness(need_probe(x));
    if (head == "kurtosis") return TargetSpec::kurtosis(need_probe(x));
    if (head == "correlation") return TargetSpec::lag_correlation(need_probe(x), std::stod(arg));
    if (head == "variance_ratio") return TargetSpec::variance_ratio(need_probe(x), need_probe(x2));
  } catch (const std::logic_error&) {
    throw ConfigError("malformed target '" + text + "'");
  }
  throw ConfigError("unknown target '" + text + "'");
}

BootstrapEnsemble make_ensemble(std::string target, Eigen::MatrixXd samples, std::uint64_t seed) {
  if (samples.rows() < 1) throw ConfigError("bootstrap ensemble needs at least one replicate");
  BootstrapEnsemble e;
  e.target = std::move(target);
  e.seed = seed;
  e.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - e.mean.transpose();
  e.sd = (centered.array().square().colwise().sum() / static_cast<double>(samples.rows()))
             .sqrt()
             .transpose();
  // Identical replicates: no rounding residue in the spread.
  for (Eigen::Index t = 0; t < samples.cols(); ++t) {
    if (samples.col(t).minCoeff() == samples.col(t).maxCoeff()) {
      e.mean[t] = samples(0, t);
      e.sd[t] = 0.0;
    }
  }
  e.samples = std::move(samples);
  return e;
}

std::vector<BootstrapEnsemble> bootstrap_pipeline(const FunctionalDataset& data,
                                                  const Pipeline& pipeline, int B,
                                                  std::uint64_t seed,
                                                  const std::vector<TargetSpec>& targets,
                                                  int threads) {
  if (B < 2) throw ConfigError("bootstrap needs B >= 2");
  if (targets.empty()) throw ConfigError("bootstrap needs at least one target");
  validate(data);
  FitDepth depth = FitDepth::Mean;
  for (const auto& t : targets)
    if (static_cast<int>(t.depth()) > static_cast<int>(depth)) depth = t.depth();

  const Eigen::Index N = data.subjects();
  const Eigen::Index T = data.points();
  std::vector<Eigen::MatrixXd> curves(targets.size(), Eigen::MatrixXd(B, T));
  parallel_for(static_cast<std::size_t>(B), threads, [&](std::size_t b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxResampleAttempts)
        throw DataError("bootstrap replicate " + std::to_string(b) + " had a rank-deficient design in " +
                        std::to_string(kMaxResampleAttempts) + " resamples");
      Rng rng = make_stream(seed, {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(attempt)});
      std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);
      std::vector<Eigen::Index> rows(static_cast<std::size_t>(N));
      for (auto& r : rows) r = pick(rng);
      try {
        const PipelineFit fit = pipeline.fit(resample_rows(data, rows), depth);
        for (std::size_t t = 0; t < targets.size(); ++t)
          curves[t].row(static_cast<Eigen::Index>(b)) = targets[t].evaluate(fit).transpose();
        return;
      } catch (const RankDeficientError&) {
        continue;
      }
    }
  });
  std::vector<BootstrapEnsemble> out;
  out.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t)
    out.push_back(make_ensemble(targets[t].label(), std::move(curves[t]), seed));
  return out;
}

std::string to_string(BandKind kind) {
  switch (kind) {
    case BandKind::Wald: return "Wald";
    case BandKind::CmaSymmetric: return "Symmetric CMA";
    case BandKind::CmaAsymmetric: return "Asymmetric CMA";
  }
  return "unknown";
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  if (!(p > 0 && p <= 1)) throw ConfigError("quantile level must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  // Guard against p * n landing a hair above an integer through rounding.
  auto k = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, values.size());
  return values[k - 1];
}

int minimum_replicates(double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0, 1)");
  return static_cast<int>(std::ceil(2.0 / alpha - 1e-9));
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

namespace {

BandResult assemble(const BootstrapEnsemble& ensemble, const Eigen::VectorXd& estimate, double alpha,
                    BandKind kind, double q_lo, double q_hi) {
  BandResult r;
  r.kind = kind;
  r.alpha = alpha;
  r.q_lo = q_lo;
  r.q_hi = q_hi;
  r.estimate = estimate;
  r.lower = estimate - q_hi * ensemble.sd;
  r.upper = estimate - q_lo * ensemble.sd;
  for (Eigen::Index s = 0; s < ensemble.sd.size(); ++s)
    if (!(ensemble.sd[s] > 0)) r.collapsed.push_back(s);
  return r;
}

void check_shapes(const BootstrapEnsemble& ensemble, const Eigen::VectorXd& estimate, double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0, 1)");
  if (estimate.size() != ensemble.sd.size())
    throw DataError("estimate length does not match the bootstrap ensemble");
}

}  // namespace

BandResult wald_band(const BootstrapEnsemble& ensemble, const Eigen::VectorXd& estimate, double alpha) {
  check_shapes(ensemble, estimate, alpha);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  return assemble(ensemble, estimate, alpha, BandKind::Wald, -z, z);
}

BandResult cma_band(const BootstrapEnsemble& ensemble, const Eigen::VectorXd& estimate, double alpha,
                    bool symmetric) {
  check_shapes(ensemble, estimate, alpha);
  const Eigen::Index B = ensemble.replicates();
  if (B < minimum_replicates(alpha))
    throw ConfigError("CMA band at alpha " + std::to_string(alpha) + " needs B >= " +
                      std::to_string(minimum_replicates(alpha)) + ", got " + std::to_string(B));
  std::vector<double> zmax(static_cast<std::size_t>(B)), zmin(static_cast<std::size_t>(B)),
      zabs(static_cast<std::size_t>(B));
  bool any_location = false;
  for (Eigen::Index b = 0; b < B; ++b) {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < ensemble.sd.size(); ++s) {
      if (!(ensemble.sd[s] > 0)) continue;
      const double z = (ensemble.samples(b, s) - ensemble.mean[s]) / ensemble.sd[s];
      hi = std::max(hi, z);
      lo = std::min(lo, z);
      any_location = true;
    }
    const auto i = static_cast<std::size_t>(b);
    zmax[i] = hi;
    zmin[i] = lo;
    zabs[i] = std::max(std::abs(hi), std::abs(lo));
  }
  if (!any_location) {
    // Degenerate ensemble: every location collapses to the estimate.
    return assemble(ensemble, estimate, alpha,
                    symmetric ? BandKind::CmaSymmetric : BandKind::CmaAsymmetric, 0.0, 0.0);
  }
  if (symmetric) {
    const double q = empirical_quantile(zabs, 1.0 - alpha);
    return assemble(ensemble, estimate, alpha, BandKind::CmaSymmetric, -q, q);
  }
  // Clamped so the band always contains the estimate.
  const double q_hi = std::max(0.0, empirical_quantile(zmax, 1.0 - alpha / 2.0));
  // Lower quantile as the mirror of an upper one, so that a reflected ensemble gets q_lo = -q_hi.
  for (double& v : zmin) v = -v;
  const double q_lo = std::min(0.0, -empirical_quantile(zmin, 1.0 - alpha / 2.0));
  return assemble(ensemble, estimate, alpha, BandKind::CmaAsymmetric, q_lo, q_hi);
}

}  // namespace fmr
