#include "fmr/fosr.hpp"

#include <string>

#include "fmr/errors.hpp"
#include "fmr/smooth.hpp"

namespace fmr {

void validate(const FunctionalDataset& data) {
  if (data.X.rows() != data.Y.rows())
    throw DataError("Y has " + std::to_string(data.Y.rows()) + " rows but X has " +
                    std::to_string(data.X.rows()));
  if (data.grid.size() != data.Y.cols())
    throw DataError("grid has " + std::to_string(data.grid.size()) + " points but Y has " +
                    std::to_string(data.Y.cols()) + " columns");
  if (!data.covariate_names.empty() &&
      static_cast<Eigen::Index>(data.covariate_names.size()) != data.X.cols())
    throw DataError("covariate name count does not match X columns");
  if (!data.Y.allFinite()) throw DataError("Y contains non-finite values");
  if (!data.X.allFinite()) throw DataError("X contains non-finite values");
}

FunctionalDataset resample_rows(const FunctionalDataset& data,
                                const std::vector<Eigen::Index>& rows) {
  FunctionalDataset out;
  out.grid = data.grid;
  out.covariate_names = data.covariate_names;
  out.Y.resize(static_cast<Eigen::Index>(rows.size()), data.Y.cols());
  out.X.resize(static_cast<Eigen::Index>(rows.size()), data.X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.Y.row(static_cast<Eigen::Index>(i)) = data.Y.row(rows[i]);
    out.X.row(static_cast<Eigen::Index>(i)) = data.X.row(rows[i]);
  }
  return out;
}

Eigen::MatrixXd ols_projector(const Eigen::MatrixXd& X) {
  if (X.rows() < X.cols())
    throw RankDeficientError("covariate matrix has fewer rows (" + std::to_string(X.rows()) +
                             ") than columns (" + std::to_string(X.cols()) + ")");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols())
    throw RankDeficientError("covariate matrix is rank deficient (rank " +
                             std::to_string(qr.rank()) + " of " + std::to_string(X.cols()) + ")");
  const Eigen::MatrixXd gram = X.transpose() * X;
  return gram.ldlt().solve(X.transpose());
}

Eigen::MatrixXd pointwise_ols(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& X) {
  if (Y.rows() != X.rows()) throw DataError("Y and X row counts differ");
  return ols_projector(X) * Y;
}

FoSRFit fit_fosr(const FunctionalDataset& data, const CyclicBasis& basis,
                 const FoSROptions& options) {
  validate(data);
  if (basis.design().rows() != data.points())
    throw DataError("smoothing basis grid does not match the data grid");
  FoSRFit fit;
  fit.design_pinv = ols_projector(data.X);
  fit.beta_raw = fit.design_pinv * data.Y;
  const Eigen::Index P = data.covariates();
  fit.beta_smooth.resize(P, data.points());
  fit.lambdas.resize(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    const Eigen::VectorXd row = fit.beta_raw.row(p).transpose();
    const double lambda = options.fixed_lambda
                              ? *options.fixed_lambda
                              : reml_lambda(row, basis.design(), basis.penalty());
    fit.beta_smooth.row(p) =
        penalized_fit(row, basis.design(), basis.penalty(), lambda).fitted.transpose();
    fit.lambdas[p] = lambda;
  }
  fit.residuals = data.Y - data.X * fit.beta_smooth;
  return fit;
}

}  // namespace fmr
