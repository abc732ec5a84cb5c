#pragma once

#include <Eigen/Dense>

#include <memory>

namespace rdsemi::mixedmodel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class VcMethod { ML, REML };

// y = U theta + Z gamma + eps with gamma ~ N(0, sigma_gamma2 I).
// For the RD model U = [g, 1(x >= c), 1, x, ..., x^q] (fuzzy) or
// [1(x >= c), 1, x, ..., x^q] (sharp); the first column carries the effect.
struct PlmDesign {
    VectorXd y;
    MatrixXd U;
    MatrixXd Z;
    int q = 1;
};

struct VarianceComponents {
    double sigma_gamma2 = 0.0;
    double sigma2 = 0.0;
    double lambda = 0.0;
    VcMethod method = VcMethod::REML;
    double loglik = 0.0;
};

// Thin SVD of Z restricted to the non-negligible singular values:
// Z Z' = A diag(s2) A'. Shared between covariance handles of one design.
struct ZFactor {
    MatrixXd A;
    VectorXd s2;
    Eigen::Index n = 0;

    static std::shared_ptr<const ZFactor> from(const MatrixXd& Z);
};

// V = scale * (I + lambda Z Z'), applied through the Z factor so no n x n
// matrix is ever formed.
class Covariance {
public:
    Covariance() = default;
    Covariance(std::shared_ptr<const ZFactor> factor, double lambda, double scale);

    static Covariance identity(Eigen::Index n, double scale = 1.0);
    static Covariance from_components(const MatrixXd& Z, double sigma_gamma2, double sigma2);

    Eigen::Index size() const { return factor_ ? factor_->n : 0; }
    double lambda() const { return lambda_; }
    double scale() const { return scale_; }

    MatrixXd solve(const MatrixXd& M) const;
    VectorXd solve(const VectorXd& v) const;
    MatrixXd apply(const MatrixXd& M) const;
    double log_det() const;
    MatrixXd dense() const;

private:
    std::shared_ptr<const ZFactor> factor_;
    double lambda_ = 0.0;
    double scale_ = 1.0;
};

// Profiled log-likelihood in lambda = sigma_gamma2 / sigma2, with theta and
// sigma2 concentrated out.
class ProfileLikelihood {
public:
    struct Point {
        double loglik;
        double sigma2;
        VectorXd theta;
    };

    ProfileLikelihood(const PlmDesign& design, VcMethod method);
    ProfileLikelihood(const PlmDesign& design, VcMethod method, std::shared_ptr<const ZFactor> factor);

    Point evaluate(double lambda) const;
    double operator()(double lambda) const { return evaluate(lambda).loglik; }

    const std::shared_ptr<const ZFactor>& factor() const { return factor_; }

private:
    VcMethod method_;
    std::shared_ptr<const ZFactor> factor_;
    MatrixXd u_perp_;
    VectorXd y_perp_;
    MatrixXd u_par_;
    VectorXd y_par_;
};

double profile_loglik(double lambda, const PlmDesign& design, VcMethod method);

VarianceComponents fit_variance_components(const PlmDesign& design, VcMethod method);

// (U' V^-1 U)^-1 U' V^-1 y. Throws IllConditioned when the column-equilibrated
// Gram matrix has condition number >= 1e12.
VectorXd gls(const VectorXd& y, const MatrixXd& U, const Covariance& V);

struct MixedModelFit {
    PlmDesign design;
    VarianceComponents vc;
    VectorXd theta;
    VectorXd gamma_blup;
    Covariance v;
    VectorXd marginal_residuals;
    VectorXd marginal_leverage;
};

MixedModelFit fit_plm(const PlmDesign& design, VcMethod method);

// Columns [1(x >= c), 1, x, ..., x^q].
MatrixXd polynomial_block(const VectorXd& xs, double cutoff, int q);

}  // namespace rdsemi::mixedmodel
