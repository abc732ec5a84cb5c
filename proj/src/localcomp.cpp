#include "rdsemi/localcomp.hpp"

#include "rdsemi/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace rdsemi::localcomp {

VectorXd triangular_weights(const VectorXd& xs, double cutoff, double h) {
    if (!(h > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "bandwidth must be positive");
    }
    return (1.0 - (xs.array() - cutoff).abs() / h).max(0.0).matrix();
}

BoundaryFit local_linear_boundary(const VectorXd& xs, const VectorXd& target, double cutoff, double h, Side side) {
    if (xs.size() != target.size()) {
        throw Error(ErrorKind::InvalidArgument, "x and target lengths differ");
    }
    const VectorXd kernel = triangular_weights(xs, cutoff, h);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
    long count = 0;
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        const bool right = xs(i) >= cutoff;
        if (right != (side == Side::Right) || kernel(i) <= 0.0) continue;
        const double k = kernel(i);
        const double d = xs(i) - cutoff;
        s0 += k;
        s1 += k * d;
        s2 += k * d * d;
        t0 += k * target(i);
        t1 += k * d * target(i);
        members.push_back(i);
        ++count;
    }
    if (count < 3) {
        throw Error(ErrorKind::BandwidthTooSmall,
                    std::to_string(count) + " units with positive weight on the " +
                        (side == Side::Right ? "right" : "left") + " of the cutoff");
    }
    const double det = s0 * s2 - s1 * s1;
    if (!(det > 1e-14 * s0 * s2)) {
        throw Error(ErrorKind::BandwidthTooSmall, "window has no spread in x");
    }

    BoundaryFit fit;
    fit.effective = count;
    fit.intercept = (s2 * t0 - s1 * t1) / det;
    fit.slope = (s0 * t1 - s1 * t0) / det;
    fit.influence = VectorXd::Zero(xs.size());
    fit.residuals = VectorXd::Zero(xs.size());
    for (const Eigen::Index i : members) {
        const double d = xs(i) - cutoff;
        fit.influence(i) = kernel(i) * (s2 - s1 * d) / det;
        fit.residuals(i) = target(i) - fit.intercept - fit.slope * d;
    }
    return fit;
}

namespace {

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

// Second derivative at the cutoff from an unweighted quadratic fit on one
// side within `h`; returns false when the window is too thin.
bool local_curvature(const Dataset& data, double h, Side side, double& curvature, long& count) {
    std::vector<double> d, t;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double dx = data.x(i) - data.cutoff;
        const bool in = side == Side::Right ? (dx >= 0.0 && dx <= h) : (dx < 0.0 && dx >= -h);
        if (!in) continue;
        d.push_back(dx);
        t.push_back(data.y(i));
    }
    count = static_cast<long>(d.size());
    if (count < 4) return false;
    Eigen::MatrixXd A(count, 3);
    Eigen::VectorXd b(count);
    for (long i = 0; i < count; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = d[static_cast<std::size_t>(i)];
        A(i, 2) = d[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(i)];
        b(i) = t[static_cast<std::size_t>(i)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < 3) return false;
    curvature = 2.0 * qr.solve(b)(2);
    return std::isfinite(curvature);
}

}  // namespace

Bandwidth ik_bandwidth(const Dataset& data) {
    const auto n = data.size();
    if (n < 50) {
        throw Error(ErrorKind::InsufficientData, "IK bandwidth needs n >= 50, got " + std::to_string(n));
    }
    const double nd = static_cast<double>(n);
    const double mean_x = data.x.mean();
    const double sd_x = std::sqrt((data.x.array() - mean_x).square().sum() / (nd - 1.0));
    if (!(sd_x > 0.0)) {
        throw Error(ErrorKind::DegenerateSupport, "running variable is constant");
    }
    const double pilot = 1.84 * sd_x * std::pow(nd, -0.2);
    const Bandwidth fallback{pilot, true};

    // Step 1: density and one-sided conditional variances at the cutoff.
    std::vector<double> y_left, y_right;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dx = data.x(i) - data.cutoff;
        if (dx < 0.0 && dx >= -pilot) y_left.push_back(data.y(i));
        if (dx >= 0.0 && dx <= pilot) y_right.push_back(data.y(i));
    }
    if (y_left.size() < 2 || y_right.size() < 2) return fallback;
    const double density = static_cast<double>(y_left.size() + y_right.size()) / (2.0 * nd * pilot);
    const double var_left = sample_variance(y_left);
    const double var_right = sample_variance(y_right);

    // Step 2: third derivative from a global cubic with a jump, then
    // one-sided pilot bandwidths for the curvature estimates.
    Eigen::MatrixXd A(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dx = data.x(i) - data.cutoff;
        A(i, 0) = 1.0;
        A(i, 1) = dx >= 0.0 ? 1.0 : 0.0;
        A(i, 2) = dx;
        A(i, 3) = dx * dx;
        A(i, 4) = dx * dx * dx;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < 5) return fallback;
    const double third = 6.0 * qr.solve(data.y)(4);
    if (!(third * third > 0.0) || !std::isfinite(third)) return fallback;

    const double n_left = static_cast<double>(data.count_left());
    const double n_right = static_cast<double>(data.count_right());
    const double h2_left = 3.56 * std::pow(var_left / (density * third * third), 1.0 / 7.0) * std::pow(n_left, -1.0 / 7.0);
    const double h2_right =
        3.56 * std::pow(var_right / (density * third * third), 1.0 / 7.0) * std::pow(n_right, -1.0 / 7.0);

    double curv_left = 0.0, curv_right = 0.0;
    long count_left = 0, count_right = 0;
    if (!local_curvature(data, h2_left, Side::Left, curv_left, count_left) ||
        !local_curvature(data, h2_right, Side::Right, curv_right, count_right)) {
        return fallback;
    }

    // Step 3: regularized plug-in.
    const double reg_left = 2160.0 * var_left / (static_cast<double>(count_left) * std::pow(h2_left, 4));
    const double reg_right = 2160.0 * var_right / (static_cast<double>(count_right) * std::pow(h2_right, 4));
    const double diff = curv_right - curv_left;
    const double denom = density * (diff * diff + reg_left + reg_right);
    const double h = 3.4375 * std::pow((var_left + var_right) / denom, 0.2) * std::pow(nd, -0.2);
    if (!std::isfinite(h) || !(h > 0.0)) return fallback;
    return {h, false};
}

LocalFit local_fuzzy_estimate(const Dataset& data, double h) {
    validate(data);
    const BoundaryFit y_right = local_linear_boundary(data.x, data.y, data.cutoff, h, Side::Right);
    const BoundaryFit y_left = local_linear_boundary(data.x, data.y, data.cutoff, h, Side::Left);
    const BoundaryFit w_right = local_linear_boundary(data.x, data.w, data.cutoff, h, Side::Right);
    const BoundaryFit w_left = local_linear_boundary(data.x, data.w, data.cutoff, h, Side::Left);

    LocalFit fit;
    fit.h = h;
    fit.n_left = y_left.effective;
    fit.n_right = y_right.effective;
    fit.outcome_jump = y_right.intercept - y_left.intercept;
    fit.treatment_jump = w_right.intercept - w_left.intercept;
    if (!(std::abs(fit.treatment_jump) > 0.05)) {
        throw Error(ErrorKind::WeakDiscontinuity,
                    "treatment jump " + std::to_string(fit.treatment_jump) + " is within 0.05 of zero");
    }
    fit.tau_hat = fit.outcome_jump / fit.treatment_jump;

    // Left and right intercepts are independent; within a side the outcome
    // and treatment intercepts share the same influence weights.
    double var_y = 0.0, var_w = 0.0, cov_yw = 0.0;
    for (const auto* side : {&y_left, &y_right}) {
        const BoundaryFit& wfit = side == &y_left ? w_left : w_right;
        for (Eigen::Index i = 0; i < data.size(); ++i) {
            const double l2 = side->influence(i) * side->influence(i);
            var_y += l2 * side->residuals(i) * side->residuals(i);
            var_w += l2 * wfit.residuals(i) * wfit.residuals(i);
            cov_yw += l2 * side->residuals(i) * wfit.residuals(i);
        }
    }
    const double tau = fit.tau_hat;
    const double var_tau =
        (var_y - 2.0 * tau * cov_yw + tau * tau * var_w) / (fit.treatment_jump * fit.treatment_jump);
    fit.se = std::sqrt(std::max(var_tau, 0.0));
    return fit;
}

}  // namespace rdsemi::localcomp
