#include "rdsemi/splines.hpp"

#include "rdsemi/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rdsemi::splines {

int default_knot_count(long n) {
    if (n < 10) {
        throw Error(ErrorKind::InsufficientData, "knot rule needs n >= 10, got " + std::to_string(n));
    }
    const long quarter = n / 4;
    if (n >= 80) {
        return static_cast<int>(std::clamp(quarter, 20L, 35L));
    }
    return static_cast<int>(std::max(quarter, 5L));
}

namespace {

// R's type-7 quantile on sorted data.
double sorted_quantile(const std::vector<double>& sorted, double prob) {
    const double h = prob * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

KnotSequence quantile_knots(std::span<const double> xs, int K) {
    if (K < 1) {
        throw Error(ErrorKind::InvalidArgument, "knot count must be >= 1");
    }
    std::vector<double> distinct(xs.begin(), xs.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<int>(distinct.size()) < K + 2) {
        throw Error(ErrorKind::DegenerateSupport,
                    std::to_string(distinct.size()) + " distinct values cannot hold " + std::to_string(K) +
                        " interior knots");
    }

    KnotSequence out;
    out.boundary = {distinct.front(), distinct.back()};
    out.knots.reserve(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
        const double knot = sorted_quantile(distinct, static_cast<double>(k) / (K + 1));
        if (knot <= out.boundary.first || knot >= out.boundary.second ||
            (!out.knots.empty() && knot <= out.knots.back())) {
            ++out.collapsed;
            continue;
        }
        out.knots.push_back(knot);
    }
    return out;
}

MatrixXd radial_basis_matrix(const VectorXd& xs, const RadialBasisSpec& spec) {
    const auto n = xs.size();
    const int K = spec.knots.size();
    const int power = spec.exponent();
    MatrixXd Z(n, K);
    for (int k = 0; k < K; ++k) {
        const double kappa = spec.knots.knots[static_cast<std::size_t>(k)];
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = std::abs(xs(i) - kappa);
            double v = d;
            for (int p = 1; p < power; ++p) v *= d;
            Z(i, k) = v;
        }
    }
    return Z;
}

namespace {

std::vector<double> full_sequence(const KnotSequence& knots) {
    std::vector<double> xi;
    xi.reserve(knots.knots.size() + 2);
    xi.push_back(knots.boundary.first);
    xi.insert(xi.end(), knots.knots.begin(), knots.knots.end());
    xi.push_back(knots.boundary.second);
    return xi;
}

inline double cube_plus(double v) { return v > 0.0 ? v * v * v : 0.0; }

void fill_row(double x, const std::vector<double>& xi, double* out) {
    const std::size_t K = xi.size();
    const double last = xi[K - 1];
    auto d = [&](std::size_t k) { return (cube_plus(x - xi[k]) - cube_plus(x - last)) / (last - xi[k]); };
    out[0] = x;
    if (K < 3) return;
    const double d_last = d(K - 2);
    for (std::size_t j = 0; j + 2 < K; ++j) {
        out[j + 1] = d(j) - d_last;
    }
}

std::vector<double> checked_sequence(const KnotSequence& knots) {
    auto xi = full_sequence(knots);
    if (xi.size() < 2 || !(knots.boundary.first < knots.boundary.second)) {
        throw Error(ErrorKind::InvalidBasis, "natural spline needs two distinct boundary knots");
    }
    for (std::size_t k = 1; k < xi.size(); ++k) {
        if (!(xi[k - 1] < xi[k])) {
            throw Error(ErrorKind::InvalidBasis, "knot sequence must be strictly increasing");
        }
    }
    return xi;
}

}  // namespace

MatrixXd natural_cubic_basis(const VectorXd& xs, const KnotSequence& knots) {
    const auto xi = checked_sequence(knots);
    const auto cols = static_cast<Eigen::Index>(xi.size() - 1);
    // Row-major scratch so fill_row can write contiguous entries.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> B(xs.size(), cols);
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        fill_row(xs(i), xi, B.row(i).data());
    }
    return B;
}

VectorXd natural_cubic_row(double x, const KnotSequence& knots) {
    const auto xi = checked_sequence(knots);
    VectorXd row(static_cast<Eigen::Index>(xi.size() - 1));
    fill_row(x, xi, row.data());
    return row;
}

}  // namespace rdsemi::splines
