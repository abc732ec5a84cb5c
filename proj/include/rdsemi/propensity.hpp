#pragma once

#include "rdsemi/dataset.hpp"
#include "rdsemi/splines.hpp"

#include <Eigen/Dense>

namespace rdsemi::propensity {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kProbabilityClamp = 1e-6;

// Two-segment logistic fit with a jump at the cutoff:
//   logit p(x) = alpha0' S0(x) + alpha1' S1(x) 1(x >= c)
// where S_j(x) = (1, natural cubic basis of x on knots_j).
struct PropensityFit {
    VectorXd alpha0;
    VectorXd alpha1;
    splines::KnotSequence knots0;
    splines::KnotSequence knots1;
    double cutoff = 0.0;
    double r2 = 0.0;
    int knot_choice = 3;
};

struct IrlsOptions {
    int max_iterations = 100;
    double tolerance = 1e-8;
};

MatrixXd build_two_segment_design(const VectorXd& xs, double cutoff, const splines::KnotSequence& knots0,
                                  const splines::KnotSequence& knots1);

// Bernoulli maximum likelihood by IRLS with step halving.
VectorXd fit_logistic_irls(const MatrixXd& design, const VectorXd& w, const IrlsOptions& options = {});

double bernoulli_loglik(const VectorXd& eta, const VectorXd& w);

// Sum-of-squares R^2 on the 0/1 outcome.
double binary_r2(const VectorXd& w, const VectorXd& phat);

// Knots for one segment: `total_knots` natural-spline knots with the two
// outer ones at the segment's min and max.
splines::KnotSequence segment_knots(const VectorXd& segment_x, int total_knots);

// Fit with a fixed number of knots per segment (3 or 5).
PropensityFit fit_propensity(const Dataset& data, int knot_choice);

// Fit with 3 and with 5 knots per segment and keep the larger R^2.
PropensityFit fit_propensity(const Dataset& data);

double linear_predictor(const PropensityFit& fit, double x);
double predict(const PropensityFit& fit, double x);
VectorXd predict(const PropensityFit& fit, const VectorXd& xs);

inline double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace rdsemi::propensity
