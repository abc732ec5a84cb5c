#include "rdsemi/propensity.hpp"

#include "rdsemi/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace rdsemi::propensity {

namespace {

constexpr Eigen::Index kMinSegment = 10;

VectorXd segment_values(const VectorXd& xs, double cutoff, bool right) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        if ((xs(i) >= cutoff) == right) out.push_back(xs(i));
    }
    return Eigen::Map<const VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

bool separated(const VectorXd& eta) {
    const auto extreme = (eta.array().abs() > 30.0).count();
    return static_cast<double>(extreme) >= 0.95 * static_cast<double>(eta.size());
}

}  // namespace

MatrixXd build_two_segment_design(const VectorXd& xs, double cutoff, const splines::KnotSequence& knots0,
                                  const splines::KnotSequence& knots1) {
    const auto n_right = (xs.array() >= cutoff).count();
    const auto n_left = xs.size() - n_right;
    if (n_left < kMinSegment || n_right < kMinSegment) {
        throw Error(ErrorKind::SegmentTooSmall, "segments have " + std::to_string(n_left) + " and " +
                                                    std::to_string(n_right) + " observations; need 10 each");
    }
    const MatrixXd B0 = splines::natural_cubic_basis(xs, knots0);
    const MatrixXd B1 = splines::natural_cubic_basis(xs, knots1);
    const auto c0 = 1 + B0.cols();
    const auto c1 = 1 + B1.cols();

    MatrixXd D = MatrixXd::Zero(xs.size(), c0 + c1);
    D.col(0).setOnes();
    D.middleCols(1, B0.cols()) = B0;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        if (xs(i) >= cutoff) {
            D(i, c0) = 1.0;
            D.row(i).segment(c0 + 1, B1.cols()) = B1.row(i);
        }
    }
    return D;
}

double bernoulli_loglik(const VectorXd& eta, const VectorXd& w) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        ll += w(i) * eta(i) - softplus(eta(i));
    }
    return ll;
}

VectorXd fit_logistic_irls(const MatrixXd& design, const VectorXd& w, const IrlsOptions& options) {
    const auto n = design.rows();
    const auto p = design.cols();
    if (w.size() != n) {
        throw Error(ErrorKind::InvalidArgument, "design and outcome lengths differ");
    }
    if (n < p) {
        throw Error(ErrorKind::RankDeficientDesign, "fewer rows than columns");
    }

    // Rank check on the column-equilibrated design.
    VectorXd scale = design.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < p; ++j) {
        if (scale(j) == 0.0) {
            throw Error(ErrorKind::RankDeficientDesign, "design column " + std::to_string(j) + " is zero");
        }
    }
    const MatrixXd equilibrated = design * scale.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(equilibrated);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        throw Error(ErrorKind::RankDeficientDesign,
                    "design rank " + std::to_string(qr.rank()) + " < " + std::to_string(p) + " columns");
    }

    VectorXd beta = VectorXd::Zero(p);
    VectorXd eta = VectorXd::Zero(n);
    double ll = bernoulli_loglik(eta, w);

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (separated(eta)) {
            throw Error(ErrorKind::SeparationDetected, "linear predictors diverge; the design looks sharp");
        }
        VectorXd mu(n), weight(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu(i) = expit(eta(i));
            weight(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
        }
        const VectorXd score = design.transpose() * (w - mu);
        const MatrixXd info = design.transpose() * weight.asDiagonal() * design;
        Eigen::LDLT<MatrixXd> ldlt(info);
        VectorXd step = ldlt.solve(score);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            throw Error(ErrorKind::NumericalFailure, "IRLS information matrix is singular");
        }

        // Step halving keeps the log-likelihood non-decreasing.
        double factor = 1.0;
        VectorXd candidate;
        VectorXd candidate_eta;
        double candidate_ll = -std::numeric_limits<double>::infinity();
        for (int half = 0; half < 30; ++half) {
            candidate = beta + factor * step;
            candidate_eta = design * candidate;
            candidate_ll = bernoulli_loglik(candidate_eta, w);
            if (std::isfinite(candidate_ll) && candidate_ll >= ll - 1e-12 * std::abs(ll)) break;
            factor *= 0.5;
        }
        if (!(candidate_ll >= ll - 1e-12 * std::abs(ll))) {
            // No ascent possible along the Newton direction: we are at the optimum.
            break;
        }
        const double change = (candidate - beta).cwiseAbs().maxCoeff();
        beta = candidate;
        eta = candidate_eta;
        ll = candidate_ll;
        if (change < options.tolerance) {
            return beta;
        }
    }
    if (separated(eta)) {
        throw Error(ErrorKind::SeparationDetected, "linear predictors diverge; the design looks sharp");
    }
    return beta;
}

double binary_r2(const VectorXd& w, const VectorXd& phat) {
    if (w.size() != phat.size() || w.size() == 0) {
        throw Error(ErrorKind::InvalidArgument, "binary_r2 needs equal, non-empty lengths");
    }
    const double mean = w.mean();
    const double total = (w.array() - mean).square().sum();
    if (total == 0.0) {
        throw Error(ErrorKind::DegenerateOutcome, "treatment indicator is constant");
    }
    return 1.0 - (w - phat).squaredNorm() / total;
}

splines::KnotSequence segment_knots(const VectorXd& segment_x, int total_knots) {
    if (total_knots < 2) {
        throw Error(ErrorKind::InvalidBasis, "natural spline needs at least 2 knots");
    }
    if (total_knots == 2) {
        splines::KnotSequence ks;
        ks.boundary = {segment_x.minCoeff(), segment_x.maxCoeff()};
        if (!(ks.boundary.first < ks.boundary.second)) {
            throw Error(ErrorKind::DegenerateSupport, "segment has a single distinct x value");
        }
        return ks;
    }
    return splines::quantile_knots(std::span<const double>(segment_x.data(), static_cast<std::size_t>(segment_x.size())),
                                   total_knots - 2);
}

PropensityFit fit_propensity(const Dataset& data, int knot_choice) {
    const VectorXd left = segment_values(data.x, data.cutoff, false);
    const VectorXd right = segment_values(data.x, data.cutoff, true);
    if (left.size() < kMinSegment || right.size() < kMinSegment) {
        throw Error(ErrorKind::SegmentTooSmall, "segments have " + std::to_string(left.size()) + " and " +
                                                    std::to_string(right.size()) + " observations; need 10 each");
    }
    for (const bool side : {false, true}) {
        double lo = 1.0, hi = 0.0;
        for (Eigen::Index i = 0; i < data.x.size(); ++i) {
            if ((data.x(i) >= data.cutoff) != side) continue;
            lo = std::min(lo, data.w(i));
            hi = std::max(hi, data.w(i));
        }
        if (lo == hi) {
            throw Error(ErrorKind::DegenerateOutcome,
                        std::string("treatment is constant on the ") + (side ? "right" : "left") + " of the cutoff");
        }
    }

    PropensityFit fit;
    fit.cutoff = data.cutoff;
    fit.knot_choice = knot_choice;
    fit.knots0 = segment_knots(left, knot_choice);
    fit.knots1 = segment_knots(right, knot_choice);

    const MatrixXd design = build_two_segment_design(data.x, data.cutoff, fit.knots0, fit.knots1);
    const VectorXd coef = fit_logistic_irls(design, data.w);
    const auto c0 = fit.knots0.size() + 2;
    fit.alpha0 = coef.head(c0);
    fit.alpha1 = coef.tail(coef.size() - c0);
    fit.r2 = binary_r2(data.w, predict(fit, data.x));
    return fit;
}

PropensityFit fit_propensity(const Dataset& data) {
    std::optional<PropensityFit> best;
    std::optional<Error> first_error;
    for (const int choice : {3, 5}) {
        try {
            PropensityFit fit = fit_propensity(data, choice);
            if (!best || fit.r2 > best->r2) best = std::move(fit);
        } catch (const Error& e) {
            // Separation or degenerate data will fail both choices the same way.
            if (e.kind() == ErrorKind::SeparationDetected || e.kind() == ErrorKind::DegenerateOutcome ||
                e.kind() == ErrorKind::SegmentTooSmall) {
                throw;
            }
            if (!first_error) first_error = e;
        }
    }
    if (!best) throw *first_error;
    return *best;
}

double linear_predictor(const PropensityFit& fit, double x) {
    double eta = fit.alpha0(0) + splines::natural_cubic_row(x, fit.knots0).dot(fit.alpha0.tail(fit.alpha0.size() - 1));
    if (x >= fit.cutoff) {
        eta += fit.alpha1(0) + splines::natural_cubic_row(x, fit.knots1).dot(fit.alpha1.tail(fit.alpha1.size() - 1));
    }
    return eta;
}

double predict(const PropensityFit& fit, double x) {
    return std::clamp(expit(linear_predictor(fit, x)), kProbabilityClamp, 1.0 - kProbabilityClamp);
}

VectorXd predict(const PropensityFit& fit, const VectorXd& xs) {
    VectorXd out(xs.size());
    for (Eigen::Index i = 0; i < xs.size(); ++i) out(i) = predict(fit, xs(i));
    return out;
}

}  // namespace rdsemi::propensity
