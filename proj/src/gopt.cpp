#include "rdsemi/gopt.hpp"

#include "rdsemi/error.hpp"

#include <cmath>
#include <string>

namespace rdsemi::gopt {

MatrixXd power_matrix(const VectorXd& phat, int m) {
    if (m < 1) {
        throw Error(ErrorKind::InvalidArgument, "polynomial order m must be >= 1");
    }
    MatrixXd P(phat.size(), m);
    P.col(0) = phat;
    for (int k = 1; k < m; ++k) {
        P.col(k) = P.col(k - 1).cwiseProduct(phat);
    }
    return P;
}

QPair normalize_q(const MatrixXd& prp, const MatrixXd& psp) {
    const auto m = static_cast<double>(prp.rows());
    const double tr_r = prp.trace();
    const double tr_s = psp.trace();
    if (!(tr_r > 0.0) || !(tr_s > 0.0)) {
        throw Error(ErrorKind::DegenerateQuadraticForm, "P'RP or P'SP has non-positive trace");
    }
    QPair out;
    out.qr = (m / tr_r) * 0.5 * (prp + prp.transpose());
    out.qs = (m / tr_s) * 0.5 * (psp + psp.transpose());
    return out;
}

QPair q_matrices(const MatrixXd& P, const inference::RsMatrices& rs) {
    return normalize_q(rs.quad_r(P), rs.quad_s(P));
}

ReducedQs reduce_qs(const MatrixXd& qs, double tol) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (qs + qs.transpose()));
    if (eig.info() != Eigen::Success) {
        throw Error(ErrorKind::NumericalFailure, "eigendecomposition of Q_S failed");
    }
    const VectorXd& values = eig.eigenvalues();
    Eigen::Index kept = 0;
    for (Eigen::Index k = 0; k < values.size(); ++k) {
        if (values(k) > tol) ++kept;
    }
    if (kept == 0) {
        throw Error(ErrorKind::DegenerateQuadraticForm, "Q_S has no eigenvalue above the threshold");
    }
    // Eigen sorts ascending; report the retained pairs largest first.
    ReducedQs out;
    out.s1.resize(qs.rows(), kept);
    out.lambda.resize(kept);
    for (Eigen::Index j = 0; j < kept; ++j) {
        const Eigen::Index src = values.size() - 1 - j;
        out.s1.col(j) = eig.eigenvectors().col(src);
        out.lambda(j) = values(src);
    }
    return out;
}

GCoefficients optimal_coefficients(const QPair& qp, double tol) {
    const ReducedQs reduced = reduce_qs(qp.qs, tol);
    const MatrixXd& s1 = reduced.s1;
    MatrixXd br = s1.transpose() * qp.qr * s1;
    MatrixXd bs = s1.transpose() * qp.qs * s1;
    br = 0.5 * (br + br.transpose());
    bs = 0.5 * (bs + bs.transpose());

    Eigen::LLT<MatrixXd> llt(bs);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorKind::DegenerateQuadraticForm, "reduced Q_S is not positive definite");
    }
    // L^-1 B_R L^-T c = mu c, b = L^-T c.
    const MatrixXd L = llt.matrixL();
    const MatrixXd left = L.triangularView<Eigen::Lower>().solve(br);
    MatrixXd sym = L.triangularView<Eigen::Lower>().solve(left.transpose()).transpose();
    sym = 0.5 * (sym + sym.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) {
        throw Error(ErrorKind::NumericalFailure, "reduced Rayleigh eigenproblem failed");
    }
    const VectorXd c = eig.eigenvectors().col(0);
    const VectorXd b = L.transpose().triangularView<Eigen::Upper>().solve(c);

    GCoefficients out;
    out.m = static_cast<int>(qp.qs.rows());
    out.a = s1 * b;

    // a_1 >= 0; if a_1 vanishes the first non-zero entry decides the sign.
    double pivot = out.a(0);
    if (std::abs(pivot) < 1e-10) {
        for (Eigen::Index k = 0; k < out.a.size(); ++k) {
            if (std::abs(out.a(k)) >= 1e-10) {
                pivot = out.a(k);
                break;
            }
        }
    }
    if (pivot < 0.0) out.a = -out.a;

    const double norm = out.a.dot(qp.qs * out.a);
    if (!(norm > 0.0)) {
        throw Error(ErrorKind::DegenerateQuadraticForm, "optimal direction has zero Q_S norm");
    }
    out.a /= std::sqrt(norm);
    out.objective = out.a.dot(qp.qr * out.a);
    return out;
}

VectorXd apply_g(const MatrixXd& P, const GCoefficients& coef) {
    if (P.cols() != coef.a.size()) {
        throw Error(ErrorKind::InvalidArgument, "P has " + std::to_string(P.cols()) + " columns, a has " +
                                                    std::to_string(coef.a.size()) + " entries");
    }
    return P * coef.a;
}

}  // namespace rdsemi::gopt
