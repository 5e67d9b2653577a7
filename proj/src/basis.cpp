#include "fmr/basis.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <string>

#include "fmr/errors.hpp"

namespace fmr {
namespace {

// Nonzero B-splines and derivatives on one span of a knot vector (Piegl & Tiller A2.3).
// knots has length 2p + 2; the span of interest is [knots[p], knots[p + 1]].
// Returns ders[k][r] = k-th derivative of the r-th nonzero function, k = 0..n.
std::vector<std::vector<double>> span_basis_derivs(const std::vector<double>& knots, int p,
                                                   double u, int n) {
  const int span = p;
  std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
  std::vector<double> left(p + 1), right(p + 1);
  ndu[0][0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - knots[span + 1 - j];
    right[j] = knots[span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const double temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }
  std::vector<std::vector<double>> ders(n + 1, std::vector<double>(p + 1, 0.0));
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];
  std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a[0][0] = 1.0;
    for (int k = 1; k <= n; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int k = 1; k <= n; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
    factor *= (p - k);
  }
  return ders;
}

}  // namespace

CyclicBasis::CyclicBasis(int degree, Interval boundary, int n_knots, std::span<const double> grid)
    : degree_(degree), n_knots_(n_knots), boundary_(boundary) {
  if (degree < 1) throw ConfigError("basis degree must be >= 1, got " + std::to_string(degree));
  if (!(boundary.hi > boundary.lo))
    throw ConfigError("basis boundary must satisfy lo < hi");
  if (n_knots < degree + 1)
    throw ConfigError("cyclic basis of degree " + std::to_string(degree) + " needs at least " +
                      std::to_string(degree + 1) + " knots, got " + std::to_string(n_knots));
  grid_.resize(static_cast<Eigen::Index>(grid.size()));
  design_.resize(grid_.size(), n_knots_);
  const double slack = 1e-12 * boundary.length();
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const double s = grid[t];
    if (!(s >= boundary.lo - slack && s <= boundary.hi + slack))
      throw DataError("grid point " + std::to_string(s) + " (index " + std::to_string(t) +
                      ") lies outside the basis boundary");
    grid_[static_cast<Eigen::Index>(t)] = s;
    design_.row(static_cast<Eigen::Index>(t)) = eval(s).transpose();
  }
  if (degree_ >= 2) penalty_ = penalty_matrix(*this);
}

std::vector<double> CyclicBasis::knots() const {
  std::vector<double> k(n_knots_);
  for (int j = 0; j < n_knots_; ++j) k[j] = boundary_.lo + j * knot_spacing();
  return k;
}

Eigen::VectorXd CyclicBasis::eval(double s, int deriv) const {
  if (deriv < 0 || deriv > degree_) throw ConfigError("derivative order out of range");
  const int p = degree_;
  const double h = knot_spacing();
  // Position in knot units, reduced to [0, J).
  double u = (s - boundary_.lo) / h;
  u = std::fmod(u, static_cast<double>(n_knots_));
  if (u < 0) u += n_knots_;
  auto k = static_cast<int>(std::floor(u));
  if (k >= n_knots_) {
    k = 0;
    u = 0.0;
  }
  std::vector<double> local(2 * p + 2);
  for (int i = 0; i < 2 * p + 2; ++i) local[i] = static_cast<double>(k - p + i);
  const auto ders = span_basis_derivs(local, p, u, deriv);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_knots_);
  const double scale = std::pow(1.0 / h, deriv);
  for (int r = 0; r <= p; ++r) {
    int j = (k - p + r) % n_knots_;
    if (j < 0) j += n_knots_;
    out[j] += ders[deriv][r] * scale;
  }
  return out;
}

const Eigen::MatrixXd& CyclicBasis::penalty() const {
  if (degree_ < 2) throw ConfigError("curvature penalty requires basis degree >= 2");
  return penalty_;
}

CyclicBasis build_cyclic_basis(int degree, Interval boundary, int n_knots,
                               std::span<const double> grid) {
  return CyclicBasis(degree, boundary, n_knots, grid);
}

Eigen::MatrixXd penalty_matrix(const CyclicBasis& basis) {
  if (basis.degree() < 2) throw ConfigError("curvature penalty requires basis degree >= 2");
  // phi'' is piecewise polynomial of degree p - 2, so the integrand has degree 2p - 4 per
  // span; 10 Gauss-Legendre nodes are exact up to degree 19.
  using Rule = boost::math::quadrature::gauss<double, 10>;
  const auto& abscissa = Rule::abscissa();
  const auto& weights = Rule::weights();
  const int J = basis.dim();
  const double h = basis.knot_spacing();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(J, J);
  for (int k = 0; k < J; ++k) {
    const double a = basis.boundary().lo + k * h;
    const double mid = a + 0.5 * h;
    for (std::size_t n = 0; n < abscissa.size(); ++n) {
      for (double sign : {-1.0, 1.0}) {
        if (abscissa[n] == 0.0 && sign > 0) continue;
        const double s = mid + sign * abscissa[n] * 0.5 * h;
        const Eigen::VectorXd d2 = basis.eval(s, 2);
        P.noalias() += (weights[n] * 0.5 * h) * d2 * d2.transpose();
      }
    }
  }
  return 0.5 * (P + P.transpose());
}

}  // namespace fmr
