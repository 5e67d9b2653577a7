#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace fmr {

/// Closed interval [lo, hi] whose endpoints are identified (a circle of length hi - lo).
struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

/// Periodic B-spline basis on a closed domain with equidistant knots.
///
/// The J distinct knots are lo + k * (hi - lo) / J, k = 0..J-1, with hi identified with lo.
/// Each basis function is the sum of the ordinary B-splines on the infinite uniform knot
/// sequence that coincide modulo the period, so the basis dimension equals the knot count.
/// Instances are immutable after construction.
class CyclicBasis {
 public:
  CyclicBasis() = default;
  CyclicBasis(int degree, Interval boundary, int n_knots, std::span<const double> grid);

  int degree() const { return degree_; }
  int dim() const { return n_knots_; }
  const Interval& boundary() const { return boundary_; }
  double period() const { return boundary_.length(); }
  double knot_spacing() const { return boundary_.length() / n_knots_; }
  std::vector<double> knots() const;

  /// phi^(deriv)(s) as a J-vector, deriv in {0, 1, ..., degree}.
  Eigen::VectorXd eval(double s, int deriv = 0) const;

  const Eigen::VectorXd& grid() const { return grid_; }
  /// T x J evaluation matrix on the construction grid.
  const Eigen::MatrixXd& design() const { return design_; }
  /// J x J curvature penalty; requires degree >= 2.
  const Eigen::MatrixXd& penalty() const;

 private:
  int degree_ = 3;
  int n_knots_ = 0;
  Interval boundary_;
  Eigen::VectorXd grid_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd penalty_;
};

/// Builds a cyclic basis; throws ConfigError for too few knots, DataError for grid points
/// outside the boundary.
CyclicBasis build_cyclic_basis(int degree, Interval boundary, int n_knots,
                               std::span<const double> grid);

/// P_jk = integral of phi_j'' phi_k'' over the domain, exact per-span Gauss-Legendre quadrature.
Eigen::MatrixXd penalty_matrix(const CyclicBasis& basis);

}  // namespace fmr
