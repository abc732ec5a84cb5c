#pragma once

#include <Eigen/Dense>

#include <span>
#include <utility>
#include <vector>

namespace rdsemi::splines {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Interior knots, strictly increasing and strictly inside `boundary`.
struct KnotSequence {
    std::vector<double> knots;
    std::pair<double, double> boundary{0.0, 0.0};
    // Number of knots dropped when quantiles collided; 0 in the usual case.
    int collapsed = 0;

    int size() const { return static_cast<int>(knots.size()); }
};

// Truncated radial basis |x - kappa_k|^(2q+1).
struct RadialBasisSpec {
    int q = 1;
    KnotSequence knots;

    int exponent() const { return 2 * q + 1; }
};

// Knot count for the penalized spline: floor(n/4) capped at 35, with a
// floor of 20 once n >= 80 and of 5 below that.
int default_knot_count(long n);

// K knots at the k/(K+1) quantiles (linear interpolation) of the distinct
// values of `xs`. `xs` need not be sorted.
KnotSequence quantile_knots(std::span<const double> xs, int K);

MatrixXd radial_basis_matrix(const VectorXd& xs, const RadialBasisSpec& spec);

// Natural cubic spline basis in truncated-power form. The full knot
// sequence is (boundary.first, knots..., boundary.second); with K knots in
// total the result has K-1 columns: x itself followed by
// d_j(x) - d_{K-1}(x), j = 1..K-2. No intercept column.
MatrixXd natural_cubic_basis(const VectorXd& xs, const KnotSequence& knots);

// Single-row evaluation of natural_cubic_basis.
VectorXd natural_cubic_row(double x, const KnotSequence& knots);

}  // namespace rdsemi::splines
