#pragma once

#include "rdsemi/mixedmodel.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace rdsemi::inference {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Squared leverage-inflated marginal residuals, (e_i / (1 - h_i))^2.
struct HcDiagonal {
    VectorXd v2;
};

HcDiagonal hc_v0(const VectorXd& residuals, const VectorXd& leverage);
HcDiagonal hc_v0(const mixedmodel::MixedModelFit& fit);

// S = V^-1 (I - H) and R = (I - H)' Omega (I - H), Omega = V^-1 V0 V^-1,
// H = X (X' V^-1 X)^-1 X' V^-1. Since S is symmetric, R = S V0 S; both are
// applied to thin blocks and never formed unless dense_*() is called.
class RsMatrices {
public:
    RsMatrices(mixedmodel::Covariance v, MatrixXd X, VectorXd v0);

    // (I - H) M
    MatrixXd residual_maker(const MatrixXd& M) const;
    // S M
    MatrixXd apply_s(const MatrixXd& M) const;
    // M' S M and M' R M, symmetrized.
    MatrixXd quad_s(const MatrixXd& M) const;
    MatrixXd quad_r(const MatrixXd& M) const;

    // M' V^-1 M
    MatrixXd quad_vinv(const MatrixXd& M) const;

    MatrixXd dense_s() const;
    MatrixXd dense_r() const;

    Eigen::Index size() const { return v_.size(); }
    const VectorXd& v0() const { return v0_; }
    const mixedmodel::Covariance& covariance() const { return v_; }

private:
    mixedmodel::Covariance v_;
    MatrixXd x_;
    VectorXd v0_;
    MatrixXd vinv_x_;
    Eigen::LLT<MatrixXd> gram_;
};

// X is U without its first (effect) column.
RsMatrices rs_matrices(const mixedmodel::MixedModelFit& fit, const HcDiagonal& v0);

// g'Rg / (g'Sg)^2. Throws DegenerateG when g'Sg <= 1e-12 g'V^-1 g, i.e. when
// the fixed-effect columns absorb essentially all of g.
double vtau(const VectorXd& g, const RsMatrices& rs);

// Standard normal quantile; absolute error below 1e-12 on (1e-300, 1 - 1e-16).
double normal_quantile(double p);
// Upper-tail probability 2 * (1 - Phi(|z|)).
double two_sided_p(double z);

struct Interval {
    double tau_hat = 0.0;
    double se = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    double lo = 0.0;
    double hi = 0.0;
    double alpha = 0.05;
    bool degenerate = false;
};

// tau_hat -/+ z_{alpha/2} sqrt(v_tau).
Interval ci(double tau_hat, double v_tau, double alpha);

struct Diagnostics {
    std::string design;
    long n = 0;
    long n_left = 0;
    long n_right = 0;
    int q = 1;
    int knots = 0;
    int knots_collapsed = 0;
    int propensity_knots = 0;
    double propensity_r2 = 0.0;
    int m = 0;
    std::vector<double> g_coefficients;
    double g_objective = 0.0;
    bool g_optimized = false;
    bool g_fallback = false;
    std::string g_fallback_reason;
    std::string vc_method;
    double sigma_gamma2 = 0.0;
    double sigma2 = 0.0;
    double lambda = 0.0;
    double v_tau = 0.0;
    double max_leverage = 0.0;
    bool degenerate_interval = false;
    // False when HC inference could not be formed (e.g. leverage >= 1 on a
    // near-interpolating fit); se, z, p_value and ci are then NaN.
    bool inference_available = true;
    std::string inference_failure;
};

struct AteResult {
    double tau_hat = 0.0;
    double se = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double alpha = 0.05;
    Diagnostics diagnostics;
};

}  // namespace rdsemi::inference
