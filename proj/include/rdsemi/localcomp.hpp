#pragma once

#include "rdsemi/dataset.hpp"

#include <Eigen/Dense>

namespace rdsemi::localcomp {

using Eigen::VectorXd;

enum class Side { Left, Right };

struct BoundaryFit {
    double intercept = 0.0;
    double slope = 0.0;
    // Influence of each unit on the intercept (zero outside the side/window)
    // and the weighted-least-squares residuals.
    VectorXd influence;
    VectorXd residuals;
    long effective = 0;
};

struct LocalFit {
    double h = 0.0;
    double tau_hat = 0.0;
    double se = 0.0;
    long n_left = 0;
    long n_right = 0;
    double outcome_jump = 0.0;
    double treatment_jump = 0.0;
};

struct Bandwidth {
    double h = 0.0;
    bool fallback = false;
};

// max(0, 1 - |x - c| / h)
VectorXd triangular_weights(const VectorXd& xs, double cutoff, double h);

// Triangular-kernel weighted least squares of `target` on (1, x - c) using
// units on one side of the cutoff (the right side includes x == c).
BoundaryFit local_linear_boundary(const VectorXd& xs, const VectorXd& target, double cutoff, double h, Side side);

// Imbens-Kalyanaraman plug-in bandwidth for the outcome regression with the
// triangular kernel constant 3.4375.
Bandwidth ik_bandwidth(const Dataset& data);

// Wald ratio of the outcome jump over the treatment jump, with delta-method
// standard error from HC0 residuals inside the window.
LocalFit local_fuzzy_estimate(const Dataset& data, double h);

}  // namespace rdsemi::localcomp
