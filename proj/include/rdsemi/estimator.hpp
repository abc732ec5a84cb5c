#pragma once

#include "rdsemi/dataset.hpp"
#include "rdsemi/gopt.hpp"
#include "rdsemi/inference.hpp"
#include "rdsemi/mixedmodel.hpp"
#include "rdsemi/propensity.hpp"

#include <optional>

namespace rdsemi::estimator {

using inference::AteResult;

struct EstimateConfig {
    int q = 1;
    int m = 5;
    // Number of radial knots; the default rule applies when empty.
    std::optional<int> knots;
    mixedmodel::VcMethod vc_method = mixedmodel::VcMethod::REML;
    double alpha = 0.05;
    bool optimize_g = true;
};

void validate(const EstimateConfig& cfg);

// Intermediate objects of a fuzzy fit, kept for diagnostics and checks.
struct FuzzyTrace {
    propensity::PropensityFit propensity;
    VectorXd phat;
    mixedmodel::MixedModelFit identity_fit;
    std::optional<gopt::QPair> q;
    std::optional<gopt::GCoefficients> g;
    // V_tau on the identity fit's R, S for the Q_S-normalized identity
    // transform and for the optimal transform.
    double vtau_identity_normalized = 0.0;
    double vtau_optimal = 0.0;
    VectorXd g_values;
    mixedmodel::MixedModelFit final_fit;
    AteResult result;
};

FuzzyTrace estimate_fuzzy_traced(const Dataset& data, const EstimateConfig& cfg);
AteResult estimate_fuzzy(const Dataset& data, const EstimateConfig& cfg);
AteResult estimate_sharp(const Dataset& data, const EstimateConfig& cfg);
// Dispatches on data.design.
AteResult estimate(const Dataset& data, const EstimateConfig& cfg);

// Running variable centred at the cutoff and divided by its standard
// deviation. The spline and polynomial spans are affine invariant, so this
// only improves conditioning.
VectorXd standardized_running(const Dataset& data);

mixedmodel::MatrixXd radial_design(const VectorXd& xs_std, const EstimateConfig& cfg, int* knots_used = nullptr,
                                   int* knots_collapsed = nullptr);

}  // namespace rdsemi::estimator
