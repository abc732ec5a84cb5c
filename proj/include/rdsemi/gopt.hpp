#pragma once

#include "rdsemi/inference.hpp"

#include <Eigen/Dense>

namespace rdsemi::gopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kEigenThreshold = 1e-5;

// g(t) = a_1 t + ... + a_m t^m with a' Q_S a = 1 and a_1 >= 0.
struct GCoefficients {
    VectorXd a;
    int m = 1;
    double objective = 0.0;
};

// Trace-normalized quadratic forms Q_R = m P'RP / tr(P'RP), Q_S likewise.
struct QPair {
    MatrixXd qr;
    MatrixXd qs;
};

struct ReducedQs {
    MatrixXd s1;
    VectorXd lambda;
};

// Column k holds phat^k, k = 1..m.
MatrixXd power_matrix(const VectorXd& phat, int m);

QPair q_matrices(const MatrixXd& P, const inference::RsMatrices& rs);
// Normalizes already-formed P'RP and P'SP.
QPair normalize_q(const MatrixXd& prp, const MatrixXd& psp);

// Eigenvectors of Q_S with eigenvalue above `tol`.
ReducedQs reduce_qs(const MatrixXd& qs, double tol = kEigenThreshold);

// Minimizes a'Q_R a subject to a'Q_S a = 1, a restricted to the retained
// eigenspace of Q_S, via the smallest generalized eigenpair.
GCoefficients optimal_coefficients(const QPair& qp, double tol = kEigenThreshold);

VectorXd apply_g(const MatrixXd& P, const GCoefficients& coef);

}  // namespace rdsemi::gopt
