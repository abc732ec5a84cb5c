#include "rdsemi/inference.hpp"

#include "rdsemi/error.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace rdsemi::inference {

HcDiagonal hc_v0(const VectorXd& residuals, const VectorXd& leverage) {
    if (residuals.size() != leverage.size()) {
        throw Error(ErrorKind::InvalidArgument, "residual and leverage lengths differ");
    }
    HcDiagonal out;
    out.v2.resize(residuals.size());
    for (Eigen::Index i = 0; i < residuals.size(); ++i) {
        if (!(leverage(i) < 1.0 - 1e-8)) {
            throw Error(ErrorKind::LeverageOverflow,
                        "leverage " + std::to_string(leverage(i)) + " at unit " + std::to_string(i));
        }
        const double v = residuals(i) / (1.0 - leverage(i));
        out.v2(i) = v * v;
    }
    return out;
}

HcDiagonal hc_v0(const mixedmodel::MixedModelFit& fit) {
    return hc_v0(fit.marginal_residuals, fit.marginal_leverage);
}

RsMatrices::RsMatrices(mixedmodel::Covariance v, MatrixXd X, VectorXd v0)
    : v_(std::move(v)), x_(std::move(X)), v0_(std::move(v0)) {
    if (x_.rows() != v_.size() || v0_.size() != v_.size()) {
        throw Error(ErrorKind::InvalidArgument, "R/S inputs have inconsistent sizes");
    }
    vinv_x_ = v_.solve(x_);
    gram_.compute(x_.transpose() * vinv_x_);
    if (gram_.info() != Eigen::Success) {
        throw Error(ErrorKind::IllConditioned, "X' V^-1 X is not positive definite");
    }
}

MatrixXd RsMatrices::residual_maker(const MatrixXd& M) const {
    return M - x_ * gram_.solve(vinv_x_.transpose() * M);
}

MatrixXd RsMatrices::apply_s(const MatrixXd& M) const {
    return v_.solve(residual_maker(M));
}

MatrixXd RsMatrices::quad_s(const MatrixXd& M) const {
    const MatrixXd q = M.transpose() * apply_s(M);
    return 0.5 * (q + q.transpose());
}

MatrixXd RsMatrices::quad_r(const MatrixXd& M) const {
    const MatrixXd sm = apply_s(M);
    const MatrixXd q = sm.transpose() * v0_.asDiagonal() * sm;
    return 0.5 * (q + q.transpose());
}

MatrixXd RsMatrices::quad_vinv(const MatrixXd& M) const {
    const MatrixXd q = M.transpose() * v_.solve(M);
    return 0.5 * (q + q.transpose());
}

MatrixXd RsMatrices::dense_s() const {
    return apply_s(MatrixXd::Identity(size(), size()));
}

MatrixXd RsMatrices::dense_r() const {
    const MatrixXd s = dense_s();
    return s.transpose() * v0_.asDiagonal() * s;
}

RsMatrices rs_matrices(const mixedmodel::MixedModelFit& fit, const HcDiagonal& v0) {
    const MatrixXd& U = fit.design.U;
    return RsMatrices(fit.v, U.rightCols(U.cols() - 1), v0.v2);
}

double vtau(const VectorXd& g, const RsMatrices& rs) {
    if (g.size() != rs.size()) {
        throw Error(ErrorKind::InvalidArgument, "g has the wrong length");
    }
    const MatrixXd gm = g;
    const MatrixXd sg = rs.apply_s(gm);
    const double gsg = g.dot(sg.col(0));
    // g' V^-1 g bounds g' S g from above; comparing against it keeps the
    // check invariant to the scale of y and g.
    const double gvg = rs.quad_vinv(gm)(0, 0);
    if (!(gsg > 1e-12 * gvg) || !(gvg > 0.0)) {
        throw Error(ErrorKind::DegenerateG, "g is (numerically) in the span of the fixed-effect columns");
    }
    const double grg = (sg.col(0).array().square() * rs.v0().array()).sum();
    return grg / (gsg * gsg);
}

namespace {

// Acklam's rational approximation, relative error ~1e-9 before refinement.
double acklam(double p) {
    static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                             6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                             3.754408661907416e+00};
    constexpr double low = 0.02425;
    if (p < low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - low) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorKind::InvalidLevel, "probability must lie in (0, 1)");
    }
    // Work in the lower tail, where the erfc-based CDF keeps full relative
    // precision; 1 - p is exact for p > 0.5.
    if (p > 0.5) return -normal_quantile(1.0 - p);
    double x = acklam(p);
    // Two Halley steps against the erfc-based CDF.
    for (int i = 0; i < 2; ++i) {
        const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double two_sided_p(double z) {
    return std::erfc(std::abs(z) / std::numbers::sqrt2);
}

Interval ci(double tau_hat, double v_tau, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorKind::InvalidLevel, "alpha must lie in (0, 1)");
    }
    if (!(v_tau >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "variance must be non-negative");
    }
    Interval out;
    out.tau_hat = tau_hat;
    out.alpha = alpha;
    out.se = std::sqrt(v_tau);
    const double crit = normal_quantile(1.0 - alpha / 2.0);
    out.lo = tau_hat - crit * out.se;
    out.hi = tau_hat + crit * out.se;
    if (out.se > 0.0) {
        out.z = tau_hat / out.se;
        out.p_value = two_sided_p(out.z);
    } else {
        out.degenerate = true;
        out.z = tau_hat == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), tau_hat);
        out.p_value = tau_hat == 0.0 ? 1.0 : 0.0;
    }
    return out;
}

}  // namespace rdsemi::inference
