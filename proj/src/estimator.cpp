#include "rdsemi/estimator.hpp"

#include "rdsemi/error.hpp"
#include "rdsemi/splines.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <string>

namespace rdsemi::estimator {

using mixedmodel::MatrixXd;
using mixedmodel::MixedModelFit;
using mixedmodel::PlmDesign;

void validate(const EstimateConfig& cfg) {
    if (cfg.q < 1 || cfg.q > 3) {
        throw Error(ErrorKind::InvalidArgument, "q must be 1, 2 or 3");
    }
    if (cfg.m < 1 || cfg.m > 7) {
        throw Error(ErrorKind::InvalidArgument, "m must lie in 1..7");
    }
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
        throw Error(ErrorKind::InvalidLevel, "alpha must lie in (0, 1)");
    }
    if (cfg.knots && *cfg.knots < 1) {
        throw Error(ErrorKind::InvalidArgument, "explicit knot count must be >= 1");
    }
}

VectorXd standardized_running(const Dataset& data) {
    const auto n = static_cast<double>(data.size());
    const double mean = data.x.mean();
    const double sd = std::sqrt((data.x.array() - mean).square().sum() / (n - 1.0));
    if (!(sd > 0.0)) {
        throw Error(ErrorKind::DegenerateSupport, "running variable is constant");
    }
    return (data.x.array() - data.cutoff) / sd;
}

MatrixXd radial_design(const VectorXd& xs_std, const EstimateConfig& cfg, int* knots_used, int* knots_collapsed) {
    const int K = cfg.knots ? *cfg.knots : splines::default_knot_count(static_cast<long>(xs_std.size()));
    splines::RadialBasisSpec spec;
    spec.q = cfg.q;
    spec.knots = splines::quantile_knots(std::span<const double>(xs_std.data(), static_cast<std::size_t>(xs_std.size())), K);
    if (knots_used) *knots_used = spec.knots.size();
    if (knots_collapsed) *knots_collapsed = spec.knots.collapsed;
    return splines::radial_basis_matrix(xs_std, spec);
}

namespace {

struct Inferred {
    double v_tau = 0.0;
    double max_leverage = 0.0;
    std::string failure;
};

Inferred infer(const MixedModelFit& fit) {
    const double max_leverage = fit.marginal_leverage.maxCoeff();
    try {
        const auto v0 = inference::hc_v0(fit);
        const auto rs = inference::rs_matrices(fit, v0);
        return {inference::vtau(fit.design.U.col(0), rs), max_leverage, {}};
    } catch (const Error& e) {
        // The point estimate stays valid when only the variance cannot be formed.
        if (e.kind() != ErrorKind::LeverageOverflow) throw;
        return {std::numeric_limits<double>::quiet_NaN(), max_leverage, e.what()};
    }
}

AteResult finish(const MixedModelFit& fit, const Inferred& inf, double alpha, inference::Diagnostics diag) {
    if (!inf.failure.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        AteResult out;
        out.tau_hat = fit.theta(0);
        out.se = out.z = out.p_value = out.ci_lo = out.ci_hi = nan;
        out.alpha = alpha;
        diag.vc_method = fit.vc.method == mixedmodel::VcMethod::ML ? "ml" : "reml";
        diag.sigma_gamma2 = fit.vc.sigma_gamma2;
        diag.sigma2 = fit.vc.sigma2;
        diag.lambda = fit.vc.lambda;
        diag.v_tau = nan;
        diag.max_leverage = inf.max_leverage;
        diag.inference_available = false;
        diag.inference_failure = inf.failure;
        out.diagnostics = std::move(diag);
        return out;
    }
    const auto interval = inference::ci(fit.theta(0), inf.v_tau, alpha);
    AteResult out;
    out.tau_hat = interval.tau_hat;
    out.se = interval.se;
    out.z = interval.z;
    out.p_value = interval.p_value;
    out.ci_lo = interval.lo;
    out.ci_hi = interval.hi;
    out.alpha = alpha;
    diag.vc_method = fit.vc.method == mixedmodel::VcMethod::ML ? "ml" : "reml";
    diag.sigma_gamma2 = fit.vc.sigma_gamma2;
    diag.sigma2 = fit.vc.sigma2;
    diag.lambda = fit.vc.lambda;
    diag.v_tau = inf.v_tau;
    diag.max_leverage = inf.max_leverage;
    diag.degenerate_interval = interval.degenerate;
    out.diagnostics = std::move(diag);
    return out;
}

MatrixXd with_effect_column(const VectorXd& g, const MatrixXd& X) {
    MatrixXd U(X.rows(), X.cols() + 1);
    U.col(0) = g;
    U.rightCols(X.cols()) = X;
    return U;
}

void check_sample(const Dataset& data, long min_n) {
    validate(data);
    if (data.size() < min_n) {
        throw Error(ErrorKind::InsufficientData,
                    "need at least " + std::to_string(min_n) + " observations, got " + std::to_string(data.size()));
    }
    if (data.count_left() == 0 || data.count_right() == 0) {
        throw Error(ErrorKind::SegmentTooSmall, "both sides of the cutoff need observations");
    }
}

bool is_exactly_sharp(const Dataset& data) {
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.w(i) != above(data.x(i), data.cutoff)) return false;
    }
    return true;
}

inference::Diagnostics base_diagnostics(const Dataset& data, const EstimateConfig& cfg, const char* design) {
    inference::Diagnostics diag;
    diag.design = design;
    diag.n = static_cast<long>(data.size());
    diag.n_left = static_cast<long>(data.count_left());
    diag.n_right = static_cast<long>(data.count_right());
    diag.q = cfg.q;
    return diag;
}

}  // namespace

FuzzyTrace estimate_fuzzy_traced(const Dataset& data, const EstimateConfig& cfg) {
    validate(cfg);
    check_sample(data, 80);
    if (data.w.minCoeff() == data.w.maxCoeff()) {
        throw Error(ErrorKind::PreconditionViolation, "treatment takes a single value");
    }
    if (is_exactly_sharp(data)) {
        throw Error(ErrorKind::SeparationDetected, "treatment equals 1(x >= cutoff); run the sharp design");
    }

    FuzzyTrace trace;
    auto diag = base_diagnostics(data, cfg, "fuzzy");
    diag.m = cfg.m;

    trace.propensity = propensity::fit_propensity(data);
    trace.phat = propensity::predict(trace.propensity, data.x);
    diag.propensity_knots = trace.propensity.knot_choice;
    diag.propensity_r2 = trace.propensity.r2;

    const VectorXd xs = standardized_running(data);
    PlmDesign design;
    design.y = data.y;
    design.q = cfg.q;
    design.Z = radial_design(xs, cfg, &diag.knots, &diag.knots_collapsed);
    const MatrixXd X = mixedmodel::polynomial_block(xs, 0.0, cfg.q);
    design.U = with_effect_column(trace.phat, X);

    trace.identity_fit = mixedmodel::fit_plm(design, cfg.vc_method);
    trace.final_fit = trace.identity_fit;
    trace.g_values = trace.phat;
    diag.g_coefficients = {1.0};

    if (cfg.optimize_g) {
        try {
            const auto v0 = inference::hc_v0(trace.identity_fit);
            const auto rs = inference::rs_matrices(trace.identity_fit, v0);
            const MatrixXd P = gopt::power_matrix(trace.phat, cfg.m);
            trace.q = gopt::q_matrices(P, rs);
            trace.g = gopt::optimal_coefficients(*trace.q, gopt::kEigenThreshold);

            const VectorXd g_opt = gopt::apply_g(P, *trace.g);
            const double qs11 = trace.q->qs(0, 0);
            trace.vtau_identity_normalized = inference::vtau(trace.phat / std::sqrt(qs11), rs);
            trace.vtau_optimal = inference::vtau(g_opt, rs);

            PlmDesign refit = design;
            refit.U.col(0) = g_opt;
            MixedModelFit fit = mixedmodel::fit_plm(refit, cfg.vc_method);
            const Inferred inf = infer(fit);
            if (!inf.failure.empty()) {
                throw Error(ErrorKind::LeverageOverflow, inf.failure);
            }
            trace.final_fit = std::move(fit);
            trace.g_values = g_opt;
            diag.g_optimized = true;
            diag.g_coefficients.assign(trace.g->a.data(), trace.g->a.data() + trace.g->a.size());
            diag.g_objective = trace.g->objective;
            trace.result = finish(trace.final_fit, inf, cfg.alpha, diag);
            return trace;
        } catch (const Error& e) {
            if (is_validation_error(e.kind())) throw;
            diag.g_fallback = true;
            diag.g_fallback_reason = e.what();
        }
    }

    trace.result = finish(trace.final_fit, infer(trace.final_fit), cfg.alpha, diag);
    return trace;
}

AteResult estimate_fuzzy(const Dataset& data, const EstimateConfig& cfg) {
    return estimate_fuzzy_traced(data, cfg).result;
}

AteResult estimate_sharp(const Dataset& data, const EstimateConfig& cfg) {
    validate(cfg);
    check_sample(data, 40);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.w(i) != above(data.x(i), data.cutoff)) {
            throw Error(ErrorKind::NotSharpDesign, "unit " + std::to_string(i) + " has w = " +
                                                       std::to_string(static_cast<int>(data.w(i))) +
                                                       " but 1(x >= cutoff) = " +
                                                       std::to_string(static_cast<int>(above(data.x(i), data.cutoff))));
        }
    }

    auto diag = base_diagnostics(data, cfg, "sharp");
    const VectorXd xs = standardized_running(data);
    PlmDesign design;
    design.y = data.y;
    design.q = cfg.q;
    design.Z = radial_design(xs, cfg, &diag.knots, &diag.knots_collapsed);
    design.U = mixedmodel::polynomial_block(xs, 0.0, cfg.q);

    const MixedModelFit fit = mixedmodel::fit_plm(design, cfg.vc_method);
    return finish(fit, infer(fit), cfg.alpha, diag);
}

AteResult estimate(const Dataset& data, const EstimateConfig& cfg) {
    return data.design == Design::Sharp ? estimate_sharp(data, cfg) : estimate_fuzzy(data, cfg);
}

}  // namespace rdsemi::estimator
