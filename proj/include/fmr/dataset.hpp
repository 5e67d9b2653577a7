#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fmr {

/// N subjects observed on a common T-point grid with P scalar covariates.
struct FunctionalDataset {
  Eigen::MatrixXd Y;     ///< N x T responses
  Eigen::VectorXd grid;  ///< T domain points
  Eigen::MatrixXd X;     ///< N x P covariates
  std::vector<std::string> covariate_names;

  Eigen::Index subjects() const { return Y.rows(); }
  Eigen::Index points() const { return Y.cols(); }
  Eigen::Index covariates() const { return X.cols(); }
};

/// Throws DataError naming the mismatching dimension.
void validate(const FunctionalDataset& data);

/// Rows of Y and X selected (with repetition) by index.
FunctionalDataset resample_rows(const FunctionalDataset& data, const std::vector<Eigen::Index>& rows);

}  // namespace fmr
