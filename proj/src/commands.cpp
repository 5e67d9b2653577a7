#include "fmr/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "fmr/bands.hpp"
#include "fmr/errors.hpp"
#include "fmr/io.hpp"

namespace fmr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trimmed(std::string s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trimmed(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

Eigen::VectorXd parse_vector(const std::string& key, const std::string& text) {
  const auto parts = split(text, ',');
  Eigen::VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_number<double>(key, parts[i]);
  return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_number<int>(key, p));
  if (out.empty()) throw ConfigError("config key '" + key + "' is empty");
  return out;
}

std::string join_vector(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

void check(const RunConfig& c) {
  if (!(c.alpha > 0 && c.alpha < 1)) throw ConfigError("alpha must lie in (0, 1)");
  if (c.transform != "none" && c.transform != "log1p")
    throw ConfigError("transform must be none or log1p, got '" + c.transform + "'");
  if (c.law != "transformed" && c.law != "gaussian")
    throw ConfigError("law must be transformed or gaussian, got '" + c.law + "'");
  if (c.loadings != "declared" && c.loadings != "transposed")
    throw ConfigError("loadings must be declared or transposed, got '" + c.loadings + "'");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  if (c.B < 0) throw ConfigError("B must be non-negative");
  if (!(c.domain_hi > c.domain_lo)) throw ConfigError("domain_hi must exceed domain_lo");
}

ScoreLaw law_of(const RunConfig& c) { return c.law == "gaussian" ? ScoreLaw::Gaussian : ScoreLaw::Transformed; }
LoadingLayout layout_of(const RunConfig& c) {
  return c.loadings == "transposed" ? LoadingLayout::Transposed : LoadingLayout::Declared;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::string> numbered(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

template <std::size_t K>
std::vector<std::string> tuple_names(const std::vector<SortedTuple<K>>& tuples) {
  std::vector<std::string> out;
  for (const auto& t : tuples) {
    std::string name = "m";
    for (int j : t.idx) name += "_" + std::to_string(j + 1);
    out.push_back(name);
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

fs::path absolute_or_empty(const fs::path& p) { return p.empty() ? p : fs::absolute(p).lexically_normal(); }

}  // namespace

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.degree = degree;
  p.domain = Interval{domain_lo, domain_hi};
  p.smooth_knots = knots;
  p.score_knots = score_knots;
  p.eigenmodel = eigenmodel;
  p.bias_correction = bias_correction;
  return p;
}

std::vector<std::string> run_config_keys() {
  return {"degree",  "knots",     "score_knots", "domain_lo",    "domain_hi",  "eigenmodel", "bias_correction",
          "transform", "center",  "y",           "x",            "grid",       "fit",        "B",
          "alpha",   "seed",      "threads",     "target",       "probe",      "probe2",     "out",
          "N",       "K",         "law",         "sample_sizes", "grid_sizes", "replicates", "fixed_effects",
          "variance", "skewness", "kurtosis",    "probes",       "loadings"};
}

RunConfig parse_run_config(const std::map<std::string, std::string>& kv) {
  const auto known = run_config_keys();
  const std::set<std::string> allowed(known.begin(), known.end());
  std::vector<std::string> unknown;
  for (const auto& [k, v] : kv)
    if (!allowed.count(k)) unknown.push_back(k);
  if (!unknown.empty()) {
    std::string msg = "unknown config key";
    msg += unknown.size() > 1 ? "s: " : ": ";
    for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
    throw ConfigError(msg);
  }

  RunConfig c;
  auto get = [&](const char* key, auto&& apply) {
    if (auto it = kv.find(key); it != kv.end()) apply(it->second);
  };
  get("degree", [&](const std::string& v) { c.degree = parse_number<int>("degree", v); });
  get("knots", [&](const std::string& v) { c.knots = parse_number<int>("knots", v); });
  get("score_knots", [&](const std::string& v) { c.score_knots = parse_number<int>("score_knots", v); });
  get("domain_lo", [&](const std::string& v) { c.domain_lo = parse_number<double>("domain_lo", v); });
  get("domain_hi", [&](const std::string& v) { c.domain_hi = parse_number<double>("domain_hi", v); });
  get("eigenmodel", [&](const std::string& v) { c.eigenmodel = parse_bool("eigenmodel", v); });
  get("bias_correction", [&](const std::string& v) { c.bias_correction = parse_bool("bias_correction", v); });
  get("transform", [&](const std::string& v) { c.transform = v; });
  get("center", [&](const std::string& v) { c.center = split(v, ','); });
  get("y", [&](const std::string& v) { c.y = v; });
  get("x", [&](const std::string& v) { c.x = v; });
  get("grid", [&](const std::string& v) { c.grid = v; });
  get("fit", [&](const std::string& v) { c.fit = v; });
  get("B", [&](const std::string& v) { c.B = parse_number<int>("B", v); });
  get("alpha", [&](const std::string& v) { c.alpha = parse_number<double>("alpha", v); });
  get("seed", [&](const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); });
  get("threads", [&](const std::string& v) { c.threads = parse_number<int>("threads", v); });
  get("target", [&](const std::string& v) { c.target = v; });
  get("probe", [&](const std::string& v) { c.probe = parse_vector("probe", v); });
  get("probe2", [&](const std::string& v) { c.probe2 = parse_vector("probe2", v); });
  get("out", [&](const std::string& v) { c.out = v; });
  get("N", [&](const std::string& v) { c.N = parse_number<int>("N", v); });
  get("K", [&](const std::string& v) { c.K = parse_number<int>("K", v); });
  get("law", [&](const std::string& v) { c.law = v; });
  get("loadings", [&](const std::string& v) { c.loadings = v; });
  get("sample_sizes", [&](const std::string& v) { c.sample_sizes = parse_int_list("sample_sizes", v); });
  get("grid_sizes", [&](const std::string& v) { c.grid_sizes = parse_int_list("grid_sizes", v); });
  get("replicates", [&](const std::string& v) { c.replicates = parse_number<int>("replicates", v); });
  get("fixed_effects", [&](const std::string& v) { c.fixed_effects = parse_bool("fixed_effects", v); });
  get("variance", [&](const std::string& v) { c.variance = parse_bool("variance", v); });
  get("skewness", [&](const std::string& v) { c.skewness = parse_bool("skewness", v); });
  get("kurtosis", [&](const std::string& v) { c.kurtosis = parse_bool("kurtosis", v); });
  get("probes", [&](const std::string& v) {
    c.probes.clear();
    for (const auto& p : split(v, ';')) c.probes.push_back(parse_vector("probes", p));
  });
  check(c);
  return c;
}

RunConfig load_run_config(const fs::path& path) { return parse_run_config(read_key_values(path)); }

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os << "degree=" << degree << "\nknots=" << knots << "\nscore_knots=" << score_knots
     << "\ndomain_lo=" << format_double(domain_lo) << "\ndomain_hi=" << format_double(domain_hi)
     << "\neigenmodel=" << eigenmodel << "\nbias_correction=" << bias_correction
     << "\ntransform=" << transform << "\ncenter=";
  for (std::size_t i = 0; i < center.size(); ++i) os << (i ? "," : "") << center[i];
  os << "\nB=" << B << "\nalpha=" << format_double(alpha) << "\nseed=" << seed << "\ntarget=" << target
     << "\nprobe=" << join_vector(probe) << "\nprobe2=" << join_vector(probe2) << "\nN=" << N << "\nK=" << K
     << "\nlaw=" << law << "\nloadings=" << loadings << "\nsample_sizes=";
  for (std::size_t i = 0; i < sample_sizes.size(); ++i) os << (i ? "," : "") << sample_sizes[i];
  os << "\ngrid_sizes=";
  for (std::size_t i = 0; i < grid_sizes.size(); ++i) os << (i ? "," : "") << grid_sizes[i];
  os << "\nreplicates=" << replicates << "\nfixed_effects=" << fixed_effects << "\nvariance=" << variance
     << "\nskewness=" << skewness << "\nkurtosis=" << kurtosis << "\nprobes=";
  for (std::size_t i = 0; i < probes.size(); ++i) os << (i ? ";" : "") << join_vector(probes[i]);
  os << "\n";
  return os.str();
}

void apply_log1p(Eigen::MatrixXd& Y) {
  for (Eigen::Index i = 0; i < Y.rows(); ++i)
    for (Eigen::Index t = 0; t < Y.cols(); ++t) {
      if (!(Y(i, t) > -1.0))
        throw DataError("log1p transform: value " + format_double(Y(i, t)) + " <= -1 at row " +
                        std::to_string(i + 1) + ", column " + std::to_string(t + 1));
      Y(i, t) = std::log1p(Y(i, t));
    }
}

FunctionalDataset load_dataset(const RunConfig& config, std::map<std::string, double>* center_means) {
  if (config.y.empty() || config.x.empty() || config.grid.empty())
    throw ConfigError("y, x and grid inputs are required");
  const CsvTable y = read_numeric_csv(config.y);
  const CsvTable x = read_numeric_csv(config.x);
  const CsvTable g = read_numeric_csv(config.grid);
  if (g.header.size() != 1) throw DataError(config.grid.string() + ": expected a single column 's'");

  FunctionalDataset d;
  d.Y = y.values;
  d.X = x.values;
  d.grid = g.values.col(0);
  d.covariate_names = x.header;
  if (d.Y.rows() != d.X.rows())
    throw DataError("Y has " + std::to_string(d.Y.rows()) + " rows but X has " + std::to_string(d.X.rows()));
  if (d.grid.size() != d.Y.cols())
    throw DataError("grid has " + std::to_string(d.grid.size()) + " points but Y has " +
                    std::to_string(d.Y.cols()) + " columns");
  if (config.transform == "log1p") apply_log1p(d.Y);

  for (const auto& name : config.center) {
    const auto it = std::find(d.covariate_names.begin(), d.covariate_names.end(), name);
    if (it == d.covariate_names.end()) throw ConfigError("center: no covariate named '" + name + "'");
    const auto col = static_cast<Eigen::Index>(it - d.covariate_names.begin());
    const double mean = d.X.col(col).mean();
    d.X.col(col).array() -= mean;
    if (center_means) (*center_means)[name] = mean;
  }
  validate(d);
  return d;
}

void cmd_simulate(const RunConfig& config) {
  DGPSpec spec;
  spec.N = config.N;
  spec.K = config.K;
  spec.seed = config.seed;
  spec.law = law_of(config);
  spec.layout = layout_of(config);
  const SimulatedData sim = generate_dataset(spec);
  ensure_dir(config.out);

  write_numeric_csv(config.out / "Y.csv", numbered("t", config.K), sim.data.Y);
  write_numeric_csv(config.out / "X.csv", sim.data.covariate_names, sim.data.X);
  write_numeric_csv(config.out / "grid.csv", {"s"}, sim.data.grid);

  Eigen::MatrixXd beta(kSimCovariates, config.K);
  Eigen::VectorXd sigma2(config.K);
  for (int k = 0; k < config.K; ++k) {
    beta.col(k) = true_fixed_effects(sim.data.grid[k]);
    sigma2[k] = true_noise_variance(sim.data.grid[k]);
  }
  json truth;
  truth["N"] = config.N;
  truth["K"] = config.K;
  truth["seed"] = config.seed;
  truth["law"] = config.law;
  truth["grid"] = "s_k = k/K, k = 1..K";
  truth["covariates"] = {{"intercept", "1"}, {"X1", "Uniform(-30,30)"}, {"X2", "Bernoulli(0.5)"},
                         {"X3", "Bernoulli(0.3)"}};
  truth["copula_covariance"] = matrix_json(copula_covariance());
  truth["loading_layout"] = config.loadings;
  truth["loadings"] = matrix_json(loading_matrix(layout_of(config)));
  truth["marginals"] = json::array({{{"shape", 3}, {"negated", true}},
                                    {{"shape", 50}, {"negated", false}},
                                    {{"shape", 20}, {"negated", true}},
                                    {{"shape", nullptr}, {"negated", false}},
                                    {{"shape", 4}, {"negated", false}}});
  truth["beta"] = matrix_json(beta);
  truth["sigma2_eps"] = matrix_json(sigma2.transpose());
  truth["moment_cache"] = {{"seed", kTruthSeed}, {"draws", kTruthDraws}};
  write_file(config.out / "truth.json", truth.dump(2) + "\n");
}

void cmd_fit(const RunConfig& config) {
  std::map<std::string, double> means;
  const FunctionalDataset data = load_dataset(config, &means);
  const Pipeline pipeline(config.pipeline(), data.grid);
  const PipelineFit fit = pipeline.fit(data, FitDepth::Moments);
  const MomentModel& m = fit.model;
  ensure_dir(config.out);

  const Eigen::Index T = data.points();
  const Eigen::Index J = m.basis.dim();
  std::vector<std::string> beta_header{"s"};
  beta_header.insert(beta_header.end(), data.covariate_names.begin(), data.covariate_names.end());
  Eigen::MatrixXd beta_table(T, 1 + m.beta.rows());
  beta_table << data.grid, m.beta.transpose();
  write_numeric_csv(config.out / "beta.csv", beta_header, beta_table);
  Eigen::MatrixXd s2(T, 2);
  s2 << data.grid, m.sigma2_eps;
  write_numeric_csv(config.out / "sigma2eps.csv", {"s", "sigma2_eps"}, s2);
  write_numeric_csv(config.out / "gamma.csv", numbered("phi", J), m.variance.gamma);
  write_numeric_csv(config.out / "C.csv", numbered("phi", J), m.correlation.C);
  write_numeric_csv(config.out / "delta.csv", tuple_names(m.third.triples), m.third.delta);
  write_numeric_csv(config.out / "eta.csv", tuple_names(m.fourth.quads), m.fourth.eta);
  std::vector<std::string> files{"beta.csv", "sigma2eps.csv", "gamma.csv", "C.csv", "delta.csv", "eta.csv"};
  if (m.correlation.eigen) {
    write_numeric_csv(config.out / "eigen_U.csv", numbered("u", J), m.correlation.eigen->U);
    write_numeric_csv(config.out / "eigen_coef.csv", numbered("u", J), m.correlation.eigen->coefficients);
    files.insert(files.end(), {"eigen_U.csv", "eigen_coef.csv"});
  }

  json manifest;
  const std::string canonical = config.canonical();
  manifest["config_hash"] = hex64(fnv1a64(canonical));
  manifest["seed"] = config.seed;
  manifest["inputs"] = {{"y", absolute_or_empty(config.y).string()},
                        {"x", absolute_or_empty(config.x).string()},
                        {"grid", absolute_or_empty(config.grid).string()}};
  manifest["transform"] = config.transform;
  manifest["center"] = means;
  manifest["covariates"] = data.covariate_names;
  manifest["basis"] = {{"degree", config.degree},        {"knots", config.knots},
                       {"score_knots", config.score_knots}, {"domain_lo", config.domain_lo},
                       {"domain_hi", config.domain_hi}};
  manifest["eigenmodel"] = config.eigenmodel;
  manifest["bias_correction"] = config.bias_correction;
  manifest["N"] = data.subjects();
  manifest["P"] = data.covariates();
  manifest["T"] = T;
  manifest["J"] = J;
  manifest["lambda"] = {{"beta", std::vector<double>(fit.fosr.lambdas.data(), fit.fosr.lambdas.data() + fit.fosr.lambdas.size())},
                        {"scores", fit.scores.lambda}};
  if (m.correlation.eigen) manifest["eigen_active"] = m.correlation.eigen->active;
  json sums;
  for (const auto& f : files) sums[f] = file_checksum(config.out / f);
  manifest["checksums"] = sums;
  write_file(config.out / "fit-manifest.json", manifest.dump(2) + "\n");
}

LoadedFit load_fit_artifacts(const fs::path& dir) {
  const fs::path manifest_path = dir / "fit-manifest.json";
  if (!fs::exists(manifest_path)) throw DataError("no fit-manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  LoadedFit out;
  RunConfig& c = out.config;
  try {
    c.degree = manifest.at("basis").at("degree");
    c.knots = manifest.at("basis").at("knots");
    c.score_knots = manifest.at("basis").at("score_knots");
    c.domain_lo = manifest.at("basis").at("domain_lo");
    c.domain_hi = manifest.at("basis").at("domain_hi");
    c.eigenmodel = manifest.at("eigenmodel");
    c.bias_correction = manifest.at("bias_correction");
    c.transform = manifest.at("transform");
    for (const auto& [name, mean] : manifest.at("center").items()) c.center.push_back(name);
    c.y = manifest.at("inputs").at("y").get<std::string>();
    c.x = manifest.at("inputs").at("x").get<std::string>();
    c.grid = manifest.at("inputs").at("grid").get<std::string>();
    c.seed = manifest.at("seed");
    out.covariate_names = manifest.at("covariates").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  for (const auto& [file, sum] : manifest.at("checksums").items())
    if (file_checksum(dir / file) != sum.get<std::string>())
      throw DataError(file + " does not match its checksum in the manifest");

  const CsvTable beta = read_numeric_csv(dir / "beta.csv");
  const CsvTable s2 = read_numeric_csv(dir / "sigma2eps.csv");
  const Eigen::VectorXd grid = beta.values.col(0);
  MomentModel& m = out.model;
  m.basis = build_cyclic_basis(c.degree, Interval{c.domain_lo, c.domain_hi}, c.score_knots,
                               std::span<const double>(grid.data(), static_cast<std::size_t>(grid.size())));
  m.beta = beta.values.rightCols(beta.values.cols() - 1).transpose();
  m.sigma2_eps = s2.values.col(1);
  m.variance.gamma = read_numeric_csv(dir / "gamma.csv").values;
  m.correlation.C = read_numeric_csv(dir / "C.csv").values;
  const int J = c.score_knots;
  m.third.triples = sorted_tuples<3>(J);
  const CsvTable delta = read_numeric_csv(dir / "delta.csv");
  if (delta.header != tuple_names(m.third.triples)) throw DataError("delta.csv columns do not match J");
  m.third.delta = delta.values;
  m.fourth.quads = sorted_tuples<4>(J);
  const CsvTable eta = read_numeric_csv(dir / "eta.csv");
  if (eta.header != tuple_names(m.fourth.quads)) throw DataError("eta.csv columns do not match J");
  m.fourth.eta = eta.values;
  for (const auto& q : m.fourth.quads) m.fourth.log_link.push_back(even_multiplicity(q.idx));
  if (c.eigenmodel) {
    CorrelationEigenmodel e;
    e.U = read_numeric_csv(dir / "eigen_U.csv").values;
    e.coefficients = read_numeric_csv(dir / "eigen_coef.csv").values;
    e.active = manifest.at("eigen_active").get<std::vector<bool>>();
    m.correlation.eigen = e;
  }
  const auto P = static_cast<Eigen::Index>(out.covariate_names.size());
  if (m.beta.rows() != P || m.variance.gamma.rows() != P || m.variance.gamma.cols() != J ||
      m.correlation.C.rows() != J || m.third.delta.rows() != P || m.fourth.eta.rows() != P ||
      m.sigma2_eps.size() != grid.size())
    throw DataError("fit artifacts in " + dir.string() + " have inconsistent shapes");
  return out;
}

void cmd_bands(const RunConfig& config) {
  if (config.fit.empty()) throw ConfigError("bands needs the fit directory (fit = DIR)");
  LoadedFit loaded = load_fit_artifacts(config.fit);
  RunConfig data_config = loaded.config;
  if (!config.y.empty()) data_config.y = config.y;
  if (!config.x.empty()) data_config.x = config.x;
  if (!config.grid.empty()) data_config.grid = config.grid;
  const FunctionalDataset data = load_dataset(data_config);
  if (data.covariate_names != loaded.covariate_names)
    throw DataError("covariates of the data differ from the fitted model");
  const auto P = data.covariates();
  auto check_probe = [&](const Eigen::VectorXd& v, const char* name) {
    if (v.size() != 0 && v.size() != P)
      throw ConfigError(std::string(name) + " has " + std::to_string(v.size()) + " entries, the model has " +
                        std::to_string(P) + " covariates");
  };
  check_probe(config.probe, "probe");
  check_probe(config.probe2, "probe2");
  const TargetSpec target = parse_target(config.target, config.probe, config.probe2);
  if (config.B < minimum_replicates(config.alpha))
    throw ConfigError("B = " + std::to_string(config.B) + " is below the minimum " +
                      std::to_string(minimum_replicates(config.alpha)) + " for alpha = " + format_double(config.alpha));

  PipelineFit point;
  point.depth = FitDepth::Moments;
  point.model = loaded.model;
  const Eigen::VectorXd estimate = target.evaluate(point);
  const Pipeline pipeline(data_config.pipeline(), data.grid);
  const auto ensembles = bootstrap_pipeline(data, pipeline, config.B, config.seed, {target}, config.threads);
  const BandResult wald = wald_band(ensembles[0], estimate, config.alpha);
  const BandResult sym = cma_band(ensembles[0], estimate, config.alpha, true);
  const BandResult asym = cma_band(ensembles[0], estimate, config.alpha, false);
  if (!wald.collapsed.empty())
    std::cerr << "warning: bootstrap SD is zero at " << wald.collapsed.size()
              << " grid points; the bands collapse to the estimate there\n";

  const Eigen::Index T = data.points();
  Eigen::MatrixXd table(T, 8);
  table << data.grid, estimate, wald.lower, wald.upper, sym.lower, sym.upper, asym.lower, asym.upper;
  ensure_dir(config.out);
  write_numeric_csv(config.out / "bands.csv",
                    {"s", "estimate", "wald_lo", "wald_hi", "cma_lo", "cma_hi", "acma_lo", "acma_hi"}, table);
}

ExperimentConfig experiment_config(const RunConfig& config) {
  ExperimentConfig e;
  e.sample_sizes = config.sample_sizes;
  e.grid_sizes = config.grid_sizes;
  e.replicates = config.replicates;
  e.B = config.B;
  e.alpha = config.alpha;
  e.seed = config.seed;
  e.law = law_of(config);
  e.layout = layout_of(config);
  e.fixed_effects = config.fixed_effects;
  e.variance = config.variance;
  e.skewness = config.skewness;
  e.kurtosis = config.kurtosis;
  e.probes = config.probes;
  e.pipeline = config.pipeline();
  e.threads = config.threads;
  return e;
}

ExperimentReport cmd_coverage(const RunConfig& config) {
  const ExperimentReport report = run_coverage_experiment(experiment_config(config));
  ensure_dir(config.out);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.coverage)
    rows.push_back({r.method, r.parameter, r.covariate, std::to_string(r.N), format_double(r.frequency),
                    format_double(r.coverage), std::to_string(r.replicates)});
  write_text_csv(config.out / "coverage.csv",
                 {"method", "parameter", "covariate", "N", "frequency", "coverage", "replicates"}, rows);
  rows.clear();
  for (const auto& r : report.ise)
    rows.push_back({r.parameter, r.covariate, std::to_string(r.N), format_double(r.frequency),
                    std::to_string(r.replicate), format_double(r.ise)});
  write_text_csv(config.out / "ise.csv", {"parameter", "covariate", "N", "frequency", "replicate", "ise"}, rows);
  return report;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Functional moment regression: simulate, fit, bootstrap bands, coverage experiments"};
  app.require_subcommand(1);

  struct Flags {
    std::string config, out, transform, y, x, grid, fit, target, probe, probe2;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads, B;
    std::optional<double> alpha;
  } f;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "flat key = value config file");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--threads", f.threads, "thread budget");
    sub->add_option("--B", f.B, "bootstrap replicates");
    sub->add_option("--alpha", f.alpha, "band level");
    sub->add_option("--transform", f.transform, "none or log1p")->check(CLI::IsMember({"none", "log1p"}));
  };
  CLI::App* simulate = app.add_subcommand("simulate", "write a simulated data set");
  CLI::App* fit = app.add_subcommand("fit", "fit the moment regression and write artifacts");
  CLI::App* bands = app.add_subcommand("bands", "bootstrap confidence bands for one target");
  CLI::App* coverage = app.add_subcommand("coverage", "run a coverage experiment");
  for (CLI::App* sub : {simulate, fit, bands, coverage}) add_common(sub);
  for (CLI::App* sub : {fit, bands}) {
    sub->add_option("--y", f.y, "Y.csv");
    sub->add_option("--x", f.x, "X.csv");
    sub->add_option("--grid", f.grid, "grid.csv");
  }
  bands->add_option("--fit", f.fit, "directory written by fit");
  bands->add_option("--target", f.target, "beta:P, noise_variance, mean, variance, skewness, kurtosis, "
                                          "correlation:LAG, variance_ratio");
  bands->add_option("--probe", f.probe, "covariate vector, comma separated");
  bands->add_option("--probe2", f.probe2, "second covariate vector for variance_ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig config = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (!f.out.empty()) config.out = f.out;
    if (f.seed) config.seed = *f.seed;
    if (f.threads) config.threads = *f.threads;
    if (f.B) config.B = *f.B;
    if (f.alpha) config.alpha = *f.alpha;
    if (!f.transform.empty()) config.transform = f.transform;
    if (!f.y.empty()) config.y = f.y;
    if (!f.x.empty()) config.x = f.x;
    if (!f.grid.empty()) config.grid = f.grid;
    if (!f.fit.empty()) config.fit = f.fit;
    if (!f.target.empty()) config.target = f.target;
    if (!f.probe.empty()) config.probe = parse_vector("probe", f.probe);
    if (!f.probe2.empty()) config.probe2 = parse_vector("probe2", f.probe2);
    check(config);

    if (simulate->parsed()) {
      cmd_simulate(config);
    } else if (fit->parsed()) {
      cmd_fit(config);
    } else if (bands->parsed()) {
      cmd_bands(config);
    } else {
      const ExperimentReport report = cmd_coverage(config);
      std::cout << "coverage: " << report.coverage.size() << " rows, " << report.ise.size() << " ISE rows, "
                << report.failures.size() << " failed replicates, " << report.seconds << " s\n";
      for (const auto& msg : report.failures) std::cerr << "replicate failed: " << msg << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace fmr
