#include "rdsemi/mixedmodel.hpp"

#include "rdsemi/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace rdsemi::mixedmodel {

namespace {

constexpr double kLogLambdaMin = -12.0;
constexpr double kLogLambdaMax = 12.0;
constexpr double kGridStep = 0.5;
constexpr double kGoldenTol = 1e-6;
constexpr double kMaxCondition = 1e12;

double equilibrated_condition(const MatrixXd& gram) {
    const VectorXd d = gram.diagonal().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
    const MatrixXd scaled = d.asDiagonal() * gram * d.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(scaled, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace

std::shared_ptr<const ZFactor> ZFactor::from(const MatrixXd& Z) {
    auto out = std::make_shared<ZFactor>();
    out->n = Z.rows();
    if (Z.cols() == 0) {
        out->A.resize(Z.rows(), 0);
        return out;
    }
    Eigen::BDCSVD<MatrixXd> svd(Z, Eigen::ComputeThinU);
    const VectorXd& s = svd.singularValues();
    const double cutoff = s.size() > 0 ? s(0) * 1e-13 : 0.0;
    Eigen::Index r = 0;
    while (r < s.size() && s(r) > cutoff) ++r;
    out->A = svd.matrixU().leftCols(r);
    out->s2 = s.head(r).array().square();
    return out;
}

Covariance::Covariance(std::shared_ptr<const ZFactor> factor, double lambda, double scale)
    : factor_(std::move(factor)), lambda_(lambda), scale_(scale) {
    if (!(scale_ > 0.0) || !(lambda_ >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "covariance needs scale > 0 and lambda >= 0");
    }
}

Covariance Covariance::identity(Eigen::Index n, double scale) {
    auto f = std::make_shared<ZFactor>();
    f->n = n;
    f->A.resize(n, 0);
    return Covariance(std::move(f), 0.0, scale);
}

Covariance Covariance::from_components(const MatrixXd& Z, double sigma_gamma2, double sigma2) {
    if (!(sigma2 > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "sigma2 must be positive");
    }
    return Covariance(ZFactor::from(Z), sigma_gamma2 / sigma2, sigma2);
}

MatrixXd Covariance::solve(const MatrixXd& M) const {
    const VectorXd shrink = (lambda_ * factor_->s2.array() / (1.0 + lambda_ * factor_->s2.array())).matrix();
    MatrixXd out = M - factor_->A * (shrink.asDiagonal() * (factor_->A.transpose() * M));
    return out / scale_;
}

VectorXd Covariance::solve(const VectorXd& v) const {
    return solve(MatrixXd(v)).col(0);
}

MatrixXd Covariance::apply(const MatrixXd& M) const {
    MatrixXd out = M + factor_->A * ((lambda_ * factor_->s2).asDiagonal() * (factor_->A.transpose() * M));
    return out * scale_;
}

double Covariance::log_det() const {
    double ld = static_cast<double>(size()) * std::log(scale_);
    for (Eigen::Index k = 0; k < factor_->s2.size(); ++k) ld += std::log1p(lambda_ * factor_->s2(k));
    return ld;
}

MatrixXd Covariance::dense() const {
    return apply(MatrixXd::Identity(size(), size()));
}

// ---------------------------------------------------------------------------
// Profile likelihood
// ---------------------------------------------------------------------------

ProfileLikelihood::ProfileLikelihood(const PlmDesign& design, VcMethod method)
    : ProfileLikelihood(design, method, ZFactor::from(design.Z)) {}

ProfileLikelihood::ProfileLikelihood(const PlmDesign& design, VcMethod method, std::shared_ptr<const ZFactor> factor)
    : method_(method), factor_(std::move(factor)) {
    if (design.U.rows() != design.y.size() || design.Z.rows() != design.y.size()) {
        throw Error(ErrorKind::InvalidArgument, "design blocks have inconsistent row counts");
    }
    if (design.y.size() <= design.U.cols()) {
        throw Error(ErrorKind::InsufficientData, "need more observations than fixed effects");
    }
    const MatrixXd& A = factor_->A;
    u_par_ = A.transpose() * design.U;
    y_par_ = A.transpose() * design.y;
    u_perp_ = design.U - A * u_par_;
    y_perp_ = design.y - A * y_par_;
}

ProfileLikelihood::Point ProfileLikelihood::evaluate(double lambda) const {
    const auto n = static_cast<double>(y_perp_.size());
    const auto p = static_cast<double>(u_perp_.cols());
    const VectorXd d = (1.0 / (1.0 + lambda * factor_->s2.array())).matrix();

    const MatrixXd gram = u_perp_.transpose() * u_perp_ + u_par_.transpose() * d.asDiagonal() * u_par_;
    const VectorXd rhs = u_perp_.transpose() * y_perp_ + u_par_.transpose() * d.asDiagonal() * y_par_;
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::NumericalFailure, "fixed-effects Gram matrix is not positive definite");
    }
    Point out;
    out.theta = llt.solve(rhs);
    const VectorXd e_perp = y_perp_ - u_perp_ * out.theta;
    const VectorXd e_par = y_par_ - u_par_ * out.theta;
    const double quad = e_perp.squaredNorm() + e_par.cwiseAbs2().dot(d);

    double log_det_v = 0.0;
    for (Eigen::Index k = 0; k < factor_->s2.size(); ++k) log_det_v += std::log1p(lambda * factor_->s2(k));

    const double dof = method_ == VcMethod::ML ? n : n - p;
    out.sigma2 = std::max(quad / dof, std::numeric_limits<double>::min());
    out.loglik = -0.5 * (dof * std::log(2.0 * std::numbers::pi * out.sigma2) + log_det_v + dof);
    if (method_ == VcMethod::REML) {
        const MatrixXd L = llt.matrixL();
        out.loglik -= L.diagonal().array().log().sum();
    }
    if (!std::isfinite(out.loglik)) {
        throw Error(ErrorKind::NumericalFailure, "profile log-likelihood is not finite at lambda = " +
                                                     std::to_string(lambda));
    }
    return out;
}

double profile_loglik(double lambda, const PlmDesign& design, VcMethod method) {
    if (!(lambda >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "lambda must be non-negative");
    }
    return ProfileLikelihood(design, method)(lambda);
}

namespace {

VarianceComponents maximize(const ProfileLikelihood& profile, VcMethod method) {
    auto at_log = [&](double t) { return profile(std::exp(t)); };

    // Coarse scan guards against local maxima; golden section refines.
    double best_t = kLogLambdaMin;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double t = kLogLambdaMin; t <= kLogLambdaMax + 1e-12; t += kGridStep) {
        const double ll = at_log(t);
        if (ll > best_ll) {
            best_ll = ll;
            best_t = t;
        }
    }

    double lo = std::max(kLogLambdaMin, best_t - kGridStep);
    double hi = std::min(kLogLambdaMax, best_t + kGridStep);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = hi - ratio * (hi - lo);
    double b = lo + ratio * (hi - lo);
    double fa = at_log(a);
    double fb = at_log(b);
    int iterations = 0;
    while (hi - lo > kGoldenTol) {
        if (++iterations > 200) {
            throw Error(ErrorKind::NumericalFailure, "golden-section search did not converge");
        }
        if (fa >= fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = at_log(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = at_log(b);
        }
    }
    for (const auto& [t, f] : {std::pair{a, fa}, std::pair{b, fb}}) {
        if (f > best_ll) {
            best_ll = f;
            best_t = t;
        }
    }

    double lambda = std::exp(best_t);
    ProfileLikelihood::Point point = profile.evaluate(lambda);
    const ProfileLikelihood::Point at_zero = profile.evaluate(0.0);
    if (at_zero.loglik >= point.loglik) {
        lambda = 0.0;
        point = at_zero;
    }

    VarianceComponents vc;
    vc.method = method;
    vc.lambda = lambda;
    vc.sigma2 = point.sigma2;
    vc.sigma_gamma2 = lambda * point.sigma2;
    vc.loglik = point.loglik;
    return vc;
}

}  // namespace

VarianceComponents fit_variance_components(const PlmDesign& design, VcMethod method) {
    return maximize(ProfileLikelihood(design, method), method);
}

VectorXd gls(const VectorXd& y, const MatrixXd& U, const Covariance& V) {
    if (U.rows() != y.size() || V.size() != y.size()) {
        throw Error(ErrorKind::InvalidArgument, "gls inputs have inconsistent sizes");
    }
    const MatrixXd vinv_u = V.solve(U);
    const MatrixXd gram = U.transpose() * vinv_u;
    const double cond = equilibrated_condition(gram);
    if (!(cond < kMaxCondition)) {
        throw Error(ErrorKind::IllConditioned, "U' V^-1 U condition number " + std::to_string(cond));
    }
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::IllConditioned, "U' V^-1 U is not positive definite");
    }
    return llt.solve(vinv_u.transpose() * y);
}

MixedModelFit fit_plm(const PlmDesign& design, VcMethod method) {
    const ProfileLikelihood profile(design, method);
    MixedModelFit fit;
    fit.design = design;
    fit.vc = maximize(profile, method);
    // A perfect fit leaves sigma2 at the floor; the working covariance is
    // then kept at unit scale, which leaves every ratio downstream unchanged.
    const double scale = fit.vc.sigma2 > 1e-280 ? fit.vc.sigma2 : 1.0;
    fit.v = Covariance(profile.factor(), fit.vc.lambda, scale);

    fit.theta = gls(design.y, design.U, fit.v);
    fit.marginal_residuals = design.y - design.U * fit.theta;

    const VectorXd vinv_e = fit.v.solve(fit.marginal_residuals);
    fit.gamma_blup = (fit.vc.lambda * scale) * (design.Z.transpose() * vinv_e);

    const MatrixXd vinv_u = fit.v.solve(design.U);
    const MatrixXd gram = design.U.transpose() * vinv_u;
    const MatrixXd gram_inv_ut = gram.llt().solve(vinv_u.transpose());
    fit.marginal_leverage = (design.U.array() * gram_inv_ut.transpose().array()).rowwise().sum();
    return fit;
}

MatrixXd polynomial_block(const VectorXd& xs, double cutoff, int q) {
    MatrixXd X(xs.size(), q + 2);
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        X(i, 0) = xs(i) >= cutoff ? 1.0 : 0.0;
        double power = 1.0;
        for (int j = 0; j <= q; ++j) {
            X(i, j + 1) = power;
            power *= xs(i);
        }
    }
    return X;
}

}  // namespace rdsemi::mixedmodel
