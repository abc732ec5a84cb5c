#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rdsemi/error.hpp"
#include "rdsemi/estimator.hpp"
#include "rdsemi/simulate.hpp"

#include <chrono>
#include <cmath>
#include <random>

using namespace rdsemi;
using namespace rdsemi::estimator;
namespace sim = rdsemi::simulate;

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

Dataset draw(sim::Model model, sim::Scenario scenario, long n, std::uint64_t seed) {
    return sim::gen_dataset({model, scenario, n, seed}, sim::calibrate_noise(model, scenario));
}

Dataset uniform_sharp(long n, std::uint64_t seed, auto&& outcome) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Dataset d;
    d.design = Design::Sharp;
    d.x.resize(n);
    d.w.resize(n);
    d.y.resize(n);
    for (long i = 0; i < n; ++i) {
        d.x(i) = u(rng);
        d.w(i) = above(d.x(i), 0.0);
        d.y(i) = outcome(d.x(i));
    }
    return d;
}

bool bit_equal(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

TEST_CASE("config validation") {
    EstimateConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.m = 8;
    CHECK(kind_of([&] { validate(cfg); }) == ErrorKind::InvalidArgument);
    cfg = {};
    cfg.q = 4;
    CHECK(kind_of([&] { validate(cfg); }) == ErrorKind::InvalidArgument);
    cfg = {};
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("sharp design") {
    EstimateConfig cfg;
    SUBCASE("noiseless M3 recovers 0.52 - 0.48") {
        Dataset d = uniform_sharp(1000, 11, [](double) { return 0.0; });
        for (long i = 0; i < d.size(); ++i) d.y(i) = sim::dgp_mu(sim::Model::M3, d.x(i), static_cast<int>(d.w(i)));
        const auto t0 = std::chrono::steady_clock::now();
        const AteResult r = estimate_sharp(d, cfg);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        CHECK(std::abs(r.tau_hat - 0.04) <= 0.02);
        CHECK(secs < 1.0);
        CHECK(r.diagnostics.design == "sharp");
    }
    SUBCASE("exact jump on a line") {
        const double delta = 1.7;
        const Dataset d = uniform_sharp(300, 12, [&](double x) { return 0.5 - 2.0 * x + delta * above(x, 0.0); });
        const AteResult r = estimate_sharp(d, cfg);
        CHECK(std::abs(r.tau_hat - delta) < 1e-6);
    }
    SUBCASE("strict-inequality treatment is not sharp") {
        Dataset d = uniform_sharp(200, 13, [](double x) { return x; });
        d.x(0) = 0.0;
        d.w(0) = 0.0;
        CHECK(kind_of([&] { estimate_sharp(d, cfg); }) == ErrorKind::NotSharpDesign);
        try {
            estimate_sharp(d, cfg);
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("unit 0") != std::string::npos);
        }
    }
    SUBCASE("noisy sharp inference is available and finite") {
        std::mt19937_64 rng(14);
        std::normal_distribution<double> z;
        const Dataset d = uniform_sharp(500, 15, [&](double x) { return 1.0 + x + above(x, 0.0) + z(rng); });
        const AteResult r = estimate_sharp(d, cfg);
        CHECK(r.diagnostics.inference_available);
        CHECK(std::isfinite(r.se));
        CHECK(r.se > 0.0);
        CHECK(r.ci_lo < r.tau_hat);
        CHECK(r.ci_hi > r.tau_hat);
    }
}

TEST_CASE("fuzzy preconditions") {
    EstimateConfig cfg;
    SUBCASE("constant treatment") {
        Dataset d = draw(sim::Model::M1, sim::Scenario::UAHolds, 300, 21);
        d.w.setOnes();
        CHECK(kind_of([&] { estimate_fuzzy(d, cfg); }) == ErrorKind::PreconditionViolation);
    }
    SUBCASE("exactly sharp treatment suggests the sharp design") {
        Dataset d = draw(sim::Model::M1, sim::Scenario::Sharp, 300, 22);
        d.design = Design::Fuzzy;
        CHECK(kind_of([&] { estimate_fuzzy(d, cfg); }) == ErrorKind::SeparationDetected);
    }
    SUBCASE("too few units") {
        const Dataset d = draw(sim::Model::M1, sim::Scenario::UAHolds, 100, 23);
        Dataset small = d;
        small.x = d.x.head(60);
        small.w = d.w.head(60);
        small.y = d.y.head(60);
        CHECK(kind_of([&] { estimate_fuzzy(small, cfg); }) == ErrorKind::InsufficientData);
    }
}

TEST_CASE("fuzzy fit diagnostics and optimality") {
    const Dataset d = draw(sim::Model::M2, sim::Scenario::UAHolds, 1000, 31);
    EstimateConfig cfg;
    const FuzzyTrace tr = estimate_fuzzy_traced(d, cfg);
    const auto& diag = tr.result.diagnostics;
    CHECK(diag.design == "fuzzy");
    CHECK(diag.n == 1000);
    CHECK(diag.n_left + diag.n_right == 1000);
    CHECK(diag.m == 5);
    CHECK(diag.vc_method == "reml");
    CHECK(std::isfinite(tr.result.tau_hat));
    REQUIRE(tr.g.has_value());
    CHECK(diag.g_optimized);
    CHECK(static_cast<long>(diag.g_coefficients.size()) == 5);
    // The optimum of the Rayleigh quotient cannot exceed the identity transform.
    CHECK(tr.vtau_optimal <= tr.vtau_identity_normalized * (1.0 + 1e-9));
    CHECK(tr.phat.minCoeff() > 0.0);
    CHECK(tr.phat.maxCoeff() < 1.0);
}

TEST_CASE("reported se with optimal g stays within 5% of identity g") {
    EstimateConfig opt;
    EstimateConfig ident;
    ident.optimize_g = false;
    int checked = 0;
    for (auto model : {sim::Model::M1, sim::Model::M2, sim::Model::M3}) {
        for (auto scenario : {sim::Scenario::UAHolds, sim::Scenario::UAViolated}) {
            for (std::uint64_t seed = 0; seed < 4; ++seed) {
                const Dataset d = draw(model, scenario, 500, sim::child_seed(41, seed));
                const AteResult a = estimate_fuzzy(d, opt);
                const AteResult b = estimate_fuzzy(d, ident);
                if (a.diagnostics.g_fallback || !a.diagnostics.inference_available || !b.diagnostics.inference_available) {
                    continue;
                }
                ++checked;
                INFO("model " << sim::to_string(model) << " scenario " << sim::to_string(scenario) << " seed " << seed);
                CHECK(a.se <= 1.05 * b.se);
            }
        }
    }
    CHECK(checked >= 20);
}

TEST_CASE("affine equivariance") {
    EstimateConfig cfg;
    Dataset d = draw(sim::Model::M1, sim::Scenario::UAHolds, 400, 51);
    const AteResult a = estimate_fuzzy(d, cfg);
    d.y = (2.0 * d.y.array() + 3.0).matrix();
    const AteResult b = estimate_fuzzy(d, cfg);
    CHECK(b.tau_hat == doctest::Approx(2.0 * a.tau_hat).epsilon(1e-6));
    CHECK(b.se == doctest::Approx(2.0 * a.se).epsilon(1e-6));
    CHECK(std::abs(b.z - a.z) < 1e-8 * std::max(1.0, std::abs(a.z)) + 1e-6);
}

TEST_CASE("determinism") {
    EstimateConfig cfg;
    const Dataset d = draw(sim::Model::M3, sim::Scenario::UAViolated, 500, 61);
    const AteResult a = estimate(d, cfg);
    const AteResult b = estimate(d, cfg);
    CHECK(bit_equal(a.tau_hat, b.tau_hat));
    CHECK(bit_equal(a.se, b.se));
    CHECK(bit_equal(a.ci_lo, b.ci_lo));
    CHECK(bit_equal(a.ci_hi, b.ci_hi));
    CHECK(a.diagnostics.g_coefficients == b.diagnostics.g_coefficients);
    CHECK(bit_equal(a.diagnostics.lambda, b.diagnostics.lambda));
}

TEST_CASE("M2 scenario 1 is centred on zero at n = 1000") {
    sim::SimulationConfig sc;
    sc.model = sim::Model::M2;
    sc.scenario = sim::Scenario::UAHolds;
    sc.n = 1000;
    sc.reps = 200;
    sc.seed = 71;
    const auto report = sim::run_monte_carlo(sc, {sim::pl_method(EstimateConfig{})});
    const auto& pl = report.per_method.at(0);
    INFO("bias " << pl.bias << " rmse " << pl.rmse << " completed " << pl.completed);
    CHECK(std::abs(pl.bias) <= 0.05);
}
