#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"

#include "rdsemi/error.hpp"
#include "rdsemi/mixedmodel.hpp"
#include "rdsemi/simulate.hpp"
#include "rdsemi/splines.hpp"

#include <cmath>
#include <random>

using namespace rdsemi;
using namespace rdsemi::mixedmodel;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an rdsemi::Error");
    return ErrorKind::InvalidArgument;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Radial design on sorted uniform points: U = [1(x>=0), 1, x], Z = |x - k|^3.
PlmDesign toy_design(std::mt19937_64& rng, long n, int K, double noise, double spline_scale) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> nd;
    VectorXd xs(n);
    for (long i = 0; i < n; ++i) xs(i) = u(rng);
    std::vector<double> kv(K);
    for (int k = 0; k < K; ++k) kv[k] = -0.6 + 1.2 * (k + 1.0) / (K + 1.0);
    splines::RadialBasisSpec spec;
    spec.q = 1;
    spec.knots.knots = kv;
    spec.knots.boundary = {-1.0, 1.0};
    PlmDesign d;
    d.q = 1;
    d.U = polynomial_block(xs, 0.0, 1);
    d.Z = splines::radial_basis_matrix(xs, spec);
    VectorXd gamma(K);
    for (int k = 0; k < K; ++k) gamma(k) = spline_scale * nd(rng);
    VectorXd eps(n);
    for (long i = 0; i < n; ++i) eps(i) = noise * nd(rng);
    VectorXd beta(3);
    beta << 0.5, 1.0, -0.7;
    d.y = d.U * beta + d.Z * gamma + eps;
    return d;
}

}  // namespace

TEST_CASE("covariance handle matches dense algebra") {
    std::mt19937_64 rng(1);
    const MatrixXd Z = oracle::random_matrix(rng, 9, 3);
    const Covariance V = Covariance::from_components(Z, 0.7, 1.3);
    const MatrixXd dense = 0.7 * Z * Z.transpose() + 1.3 * MatrixXd::Identity(9, 9);
    CHECK((V.dense() - dense).cwiseAbs().maxCoeff() < 1e-12);
    const MatrixXd M = oracle::random_matrix(rng, 9, 2);
    CHECK((V.solve(M) - dense.inverse() * M).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(V.log_det() == doctest::Approx(std::log(dense.determinant())).epsilon(1e-12));
    CHECK(V.lambda() == doctest::Approx(0.7 / 1.3));

    // rank-deficient Z: duplicated column
    MatrixXd Zd(9, 4);
    Zd << Z, Z.col(0);
    const Covariance Vd = Covariance::from_components(Zd, 0.2, 0.9);
    const MatrixXd dd = 0.2 * Zd * Zd.transpose() + 0.9 * MatrixXd::Identity(9, 9);
    CHECK((Vd.solve(M) - dd.inverse() * M).cwiseAbs().maxCoeff() < 1e-11);
    CHECK(Vd.log_det() == doctest::Approx(std::log(dd.determinant())).epsilon(1e-11));

    CHECK(kind_of([&] { Covariance::from_components(Z, 0.1, 0.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("profile log-likelihood") {
    std::mt19937_64 rng(2);
    SUBCASE("lambda = 0 is the least-squares likelihood") {
        const PlmDesign d = toy_design(rng, 30, 4, 0.3, 0.5);
        const VectorXd beta = d.U.colPivHouseholderQr().solve(d.y);
        const double rss = (d.y - d.U * beta).squaredNorm();
        const double n = 30.0;
        const double expected = -0.5 * n * (std::log(2.0 * std::numbers::pi * rss / n) + 1.0);
        CHECK(profile_loglik(0.0, d, VcMethod::ML) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("n=6, K=2 toy matches the full Gaussian density") {
        const PlmDesign d = toy_design(rng, 6, 2, 0.4, 0.5);
        for (const double lambda : {0.0, 0.05, 1.0, 17.0}) {
            const ProfileLikelihood ml(d, VcMethod::ML);
            const auto pm = ml.evaluate(lambda);
            CHECK(rel(pm.loglik, oracle::ml_loglik(d.y, d.U, d.Z, lambda * pm.sigma2, pm.sigma2)) < 1e-10);
            const ProfileLikelihood reml(d, VcMethod::REML);
            const auto pr = reml.evaluate(lambda);
            CHECK(rel(pr.loglik, oracle::reml_loglik(d.y, d.U, d.Z, lambda * pr.sigma2, pr.sigma2)) < 1e-10);
            // sigma2 is the concentrated maximizer: nudging it lowers the likelihood
            for (const double f : {0.99, 1.01}) {
                CHECK(oracle::ml_loglik(d.y, d.U, d.Z, lambda * pm.sigma2 * f, pm.sigma2 * f) < pm.loglik);
            }
        }
    }
    SUBCASE("negative lambda") {
        const PlmDesign d = toy_design(rng, 10, 2, 0.4, 0.5);
        CHECK(kind_of([&] { profile_loglik(-1.0, d, VcMethod::ML); }) == ErrorKind::InvalidArgument);
    }
}

TEST_CASE("variance components") {
    std::mt19937_64 rng(3);
    SUBCASE("no spline signal: sigma_gamma2 near zero, sigma2 near one") {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::normal_distribution<double> nd;
        const long n = 2000;
        VectorXd xs(n);
        for (long i = 0; i < n; ++i) xs(i) = u(rng);
        splines::RadialBasisSpec spec;
        spec.knots = splines::quantile_knots(std::span<const double>(xs.data(), n), 35);
        PlmDesign d;
        d.U = polynomial_block(xs, 0.0, 1);
        d.Z = splines::radial_basis_matrix(xs, spec);
        d.y.resize(n);
        for (long i = 0; i < n; ++i) d.y(i) = 1.0 + 2.0 * xs(i) + 0.5 * d.U(i, 0) + nd(rng);
        for (const auto method : {VcMethod::ML, VcMethod::REML}) {
            const auto vc = fit_variance_components(d, method);
            CHECK(vc.sigma_gamma2 < 0.05);
            CHECK(vc.sigma2 > 0.9);
            CHECK(vc.sigma2 < 1.1);
        }
    }
    SUBCASE("exact polynomial outcome: sigma2 collapses") {
        PlmDesign d = toy_design(rng, 40, 5, 0.0, 0.0);
        const auto vc = fit_variance_components(d, VcMethod::REML);
        CHECK(vc.sigma2 < 1e-8);
    }
    SUBCASE("n=8, K=2 toy agrees with a 2-D exact-likelihood grid search") {
        int checked = 0;
        for (int trial = 0; trial < 6; ++trial) {
            const PlmDesign d = toy_design(rng, 8, 2, 0.3, 0.4);
            for (const auto method : {VcMethod::ML, VcMethod::REML}) {
                const auto vc = fit_variance_components(d, method);
                const auto best = oracle::grid_search_vc(d.y, d.U, d.Z, method == VcMethod::REML);
                CAPTURE(trial);
                CHECK(rel(vc.sigma2, best.sigma2) < 1e-3);
                if (best.sigma_gamma2 > 1e-6 * best.sigma2) {
                    CHECK(rel(vc.sigma_gamma2, best.sigma_gamma2) < 1e-3);
                } else {
                    CHECK(vc.sigma_gamma2 <= 1e-5 * vc.sigma2);
                }
                CHECK(vc.loglik >= best.loglik - 1e-8 * std::abs(best.loglik));
                ++checked;
            }
        }
        CHECK(checked == 12);
    }
    SUBCASE("returned lambda beats zero and a log-spaced probe set") {
        const PlmDesign d = toy_design(rng, 120, 10, 0.2, 0.3);
        for (const auto method : {VcMethod::ML, VcMethod::REML}) {
            const auto vc = fit_variance_components(d, method);
            const ProfileLikelihood profile(d, method);
            const double at = profile(vc.lambda);
            CHECK(at == doctest::Approx(vc.loglik).epsilon(1e-12));
            CHECK(at >= profile(0.0));
            for (int k = 0; k < 20; ++k) CHECK(at >= profile(std::exp(-12.0 + 24.0 * k / 19.0)) - 1e-9);
            if (vc.lambda > 0.0) {
                CHECK(at >= profile(vc.lambda * std::exp(0.1)));
                CHECK(at >= profile(vc.lambda * std::exp(-0.1)));
                if (vc.lambda > 0.1) CHECK(at >= profile(vc.lambda - 0.1));
                CHECK(at >= profile(vc.lambda + 0.1));
            }
        }
    }
}

TEST_CASE("generalized least squares") {
    std::mt19937_64 rng(4);
    const MatrixXd U = oracle::random_matrix(rng, 20, 3);
    const VectorXd y = oracle::random_vector(rng, 20);
    const VectorXd ols = U.colPivHouseholderQr().solve(y);
    CHECK((gls(y, U, Covariance::identity(20)) - ols).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((gls(y, U, Covariance::identity(20, 4.0)) - ols).cwiseAbs().maxCoeff() < 1e-10);

    SUBCASE("n=5 hand-written normal equations") {
        MatrixXd U2(5, 2);
        U2 << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4;
        VectorXd y2(5);
        y2 << 1.0, 2.5, 2.9, 4.2, 5.1;
        // [5 10; 10 30] b = [sum y; sum x y]
        const double sy = 15.7, sxy = 0 * 1.0 + 1 * 2.5 + 2 * 2.9 + 3 * 4.2 + 4 * 5.1;
        const double det = 5.0 * 30.0 - 100.0;
        const double b0 = (30.0 * sy - 10.0 * sxy) / det;
        const double b1 = (5.0 * sxy - 10.0 * sy) / det;
        const VectorXd b = gls(y2, U2, Covariance::identity(5));
        CHECK(std::abs(b(0) - b0) < 1e-12);
        CHECK(std::abs(b(1) - b1) < 1e-12);
    }
    SUBCASE("non-identity V matches the dense formula") {
        const MatrixXd Z = oracle::random_matrix(rng, 20, 4);
        const Covariance V = Covariance::from_components(Z, 0.8, 0.5);
        CHECK((gls(y, U, V) - oracle::gls(y, U, V.dense())).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("nearly collinear columns") {
        MatrixXd Ub = U;
        Ub.col(2) = Ub.col(1) + 1e-9 * Ub.col(0);
        CHECK(kind_of([&] { gls(y, Ub, Covariance::identity(20)); }) == ErrorKind::IllConditioned);
    }
}

TEST_CASE("fit_plm") {
    std::mt19937_64 rng(5);
    SUBCASE("properties on a noisy instance") {
        const PlmDesign d = toy_design(rng, 200, 12, 0.3, 0.2);
        const MixedModelFit fit = fit_plm(d, VcMethod::REML);
        const MatrixXd V = fit.vc.sigma_gamma2 * d.Z * d.Z.transpose() + fit.vc.sigma2 * MatrixXd::Identity(200, 200);
        const MatrixXd vi = V.inverse();

        // GLS normal equations
        CHECK((d.U.transpose() * vi * fit.marginal_residuals).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((fit.theta - oracle::gls(d.y, d.U, V)).cwiseAbs().maxCoeff() < 1e-8);

        // leverage: trace identity and range
        CHECK(fit.marginal_leverage.sum() == doctest::Approx(3.0).epsilon(1e-8));
        const MatrixXd H = d.U * (d.U.transpose() * vi * d.U).inverse() * d.U.transpose() * vi;
        CHECK((fit.marginal_leverage - H.diagonal()).cwiseAbs().maxCoeff() < 1e-10);
        // With V not proportional to I the hat matrix is an oblique projection,
        // so individual entries may leave [0, 1]; only the trace is pinned.

        // BLUP
        const VectorXd blup = fit.vc.sigma_gamma2 * d.Z.transpose() * vi * (d.y - d.U * fit.theta);
        CHECK((fit.gamma_blup - blup).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, blup.cwiseAbs().maxCoeff()));

        // mixed-model / ridge duality on the augmented system [U Z]
        REQUIRE(fit.vc.sigma_gamma2 > 0.0);
        const double penalty = fit.vc.sigma2 / fit.vc.sigma_gamma2;
        MatrixXd A(200, 3 + 12);
        A << d.U, d.Z;
        MatrixXd P = MatrixXd::Zero(15, 15);
        P.bottomRightCorner(12, 12) = penalty * MatrixXd::Identity(12, 12);
        const VectorXd ridge = (A.transpose() * A + P).ldlt().solve(A.transpose() * d.y);
        CHECK((ridge.head(3) - fit.theta).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((ridge.tail(12) - fit.gamma_blup).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, ridge.tail(12).norm()));
    }
    SUBCASE("leverage lies in [0, 1] when the fit selects lambda = 0") {
        const PlmDesign base = toy_design(rng, 200, 12, 0.3, 0.0);
        const MixedModelFit fit = fit_plm(base, VcMethod::ML);
        if (fit.vc.lambda == 0.0) {
            CHECK(fit.marginal_leverage.minCoeff() > -1e-10);
            CHECK(fit.marginal_leverage.maxCoeff() < 1.0 + 1e-10);
        }
        const Covariance I = Covariance::identity(200);
        const MatrixXd H = base.U * (base.U.transpose() * base.U).inverse() * base.U.transpose();
        CHECK(H.diagonal().minCoeff() >= -1e-12);
        CHECK(H.diagonal().maxCoeff() <= 1.0 + 1e-12);
        CHECK((gls(base.y, base.U, I) - base.U.colPivHouseholderQr().solve(base.y)).norm() < 1e-10);
    }
    SUBCASE("constant outcome") {
        PlmDesign d = toy_design(rng, 60, 6, 0.3, 0.2);
        d.y.setConstant(2.5);
        const MixedModelFit fit = fit_plm(d, VcMethod::REML);
        CHECK(std::abs(fit.theta(0)) < 1e-10);
        CHECK(fit.theta(1) == doctest::Approx(2.5).epsilon(1e-10));
    }
    SUBCASE("noiseless sharp M3: jump recovered within 0.02") {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const long n = 1000;
        VectorXd xs(n), y(n);
        for (long i = 0; i < n; ++i) {
            xs(i) = u(rng);
            y(i) = simulate::dgp_mu(simulate::Model::M3, xs(i), xs(i) >= 0.0 ? 1 : 0);
        }
        splines::RadialBasisSpec spec;
        spec.knots = splines::quantile_knots(std::span<const double>(xs.data(), n), splines::default_knot_count(n));
        PlmDesign d;
        d.y = y;
        d.U = polynomial_block(xs, 0.0, 1);
        d.Z = splines::radial_basis_matrix(xs, spec);
        const MixedModelFit fit = fit_plm(d, VcMethod::REML);
        CHECK(std::abs(fit.theta(0) - 0.04) <= 0.02);
        CHECK(fit.marginal_leverage.sum() == doctest::Approx(3.0).epsilon(1e-6));
    }
}

TEST_CASE("polynomial block") {
    VectorXd xs(3);
    xs << -0.5, 0.0, 2.0;
    const MatrixXd X = polynomial_block(xs, 0.0, 2);
    REQUIRE(X.cols() == 4);
    CHECK(X(0, 0) == 0.0);
    CHECK(X(1, 0) == 1.0);
    CHECK(X(2, 1) == 1.0);
    CHECK(X(2, 2) == 2.0);
    CHECK(X(2, 3) == 4.0);
    CHECK(X(0, 3) == 0.25);
}
