#include "rdsemi/simulate.hpp"

#include "rdsemi/error.hpp"
#include "rdsemi/localcomp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <utility>

namespace rdsemi::simulate {

std::string to_string(Model model) {
    switch (model) {
        case Model::M1: return "M1";
        case Model::M2: return "M2";
        case Model::M3: return "M3";
    }
    return "?";
}

std::string to_string(Scenario scenario) {
    switch (scenario) {
        case Scenario::UAHolds: return "1";
        case Scenario::UAViolated: return "2";
        case Scenario::Sharp: return "sharp";
    }
    return "?";
}

double dgp_mu(Model model, double x, int arm) {
    switch (model) {
        case Model::M1:
            return (arm == 0 ? 3.0 : 4.0) * x * x * x;
        case Model::M2: {
            const double base = 0.42 + 0.84 * x + 1.00 * x * x + std::exp(x / 2.0);
            return arm == 0 ? base : base + (x >= 0.0 ? x * x : 0.0);
        }
        case Model::M3:
            if (arm == 0) {
                return 0.48 + x * (1.27 + x * (7.18 + x * (20.21 + x * (21.54 + x * 7.33))));
            }
            return 0.52 + x * (0.84 + x * (-3.00 + x * (7.99 + x * (-9.01 + x * 3.56))));
    }
    return 0.0;
}

double true_tau(Model model) {
    return dgp_mu(model, 0.0, 1) - dgp_mu(model, 0.0, 0);
}

double treatment_logit(double x) {
    return 0.5 * x + 0.2 * x * x + (x >= 0.0 ? 2.0 : 0.0) - 1.0;
}

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t rep) {
    return mix64(mix64(seed) ^ mix64(rep + 0x632be59bd9b4e019ULL));
}

namespace {

constexpr std::uint64_t kCalibrationSeed = 0x5eed2024c0ffeeULL;
constexpr long kCalibrationDraws = 1'000'000;

struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;
    long n = 0;

    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double variance() const {
        const double mean = sum / static_cast<double>(n);
        return sum_sq / static_cast<double>(n) - mean * mean;
    }
};

double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace

NoiseCalibration calibrate_noise_uncached(Model model, Scenario /*scenario*/, long draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Moments signal, logit, mu0, mu1;
    for (long i = 0; i < draws; ++i) {
        const double x = unif(rng);
        const double w = unit(rng) < expit(treatment_logit(x)) ? 1.0 : 0.0;
        const double m0 = dgp_mu(model, x, 0);
        const double m1 = dgp_mu(model, x, 1);
        signal.add(m0 + (m1 - m0) * w);
        logit.add(treatment_logit(x));
        mu0.add(m0);
        mu1.add(m1);
    }
    NoiseCalibration out;
    out.sigma_eta2 = signal.variance() / 3.0;
    out.sigma_eps2 = logit.variance() / 3.0;
    // Half the mass has variance sigma_eps2 and half 2 sigma_eps2.
    const double mixture = 1.5 * out.sigma_eps2;
    out.c0 = std::sqrt(mu0.variance() / (3.0 * mixture));
    out.c1 = std::sqrt(mu1.variance() / (3.0 * mixture));
    return out;
}

NoiseCalibration calibrate_noise(Model model, Scenario scenario) {
    static std::mutex mutex;
    static std::map<Model, NoiseCalibration> cache;
    // Every field depends on the model only; the scenario decides which are used.
    std::lock_guard lock(mutex);
    auto it = cache.find(model);
    if (it == cache.end()) {
        it = cache.emplace(model, calibrate_noise_uncached(model, scenario, kCalibrationDraws, kCalibrationSeed)).first;
    }
    return it->second;
}

Dataset gen_dataset(const DgpSpec& spec, const NoiseCalibration& calib) {
    if (spec.n < 100) {
        throw Error(ErrorKind::InvalidArgument, "simulated samples need n >= 100");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Dataset data;
    data.cutoff = 0.0;
    data.design = spec.scenario == Scenario::Sharp ? Design::Sharp : Design::Fuzzy;
    data.x.resize(spec.n);
    data.w.resize(spec.n);
    data.y.resize(spec.n);
    const double eta_sd = std::sqrt(calib.sigma_eta2);
    const double eps_sd = std::sqrt(calib.sigma_eps2);

    for (long i = 0; i < spec.n; ++i) {
        const double x = unif(rng);
        const double m0 = dgp_mu(spec.model, x, 0);
        const double m1 = dgp_mu(spec.model, x, 1);
        double w = 0.0;
        double y = 0.0;
        if (spec.scenario == Scenario::UAHolds) {
            w = unit(rng) < expit(treatment_logit(x)) ? 1.0 : 0.0;
            y = m0 + (m1 - m0) * w + eta_sd * normal(rng);
        } else {
            const double eps = (x < 0.0 ? eps_sd : std::sqrt(2.0) * eps_sd) * normal(rng);
            if (spec.scenario == Scenario::Sharp) {
                w = x >= 0.0 ? 1.0 : 0.0;
            } else {
                w = unit(rng) < expit(treatment_logit(x) + eps) ? 1.0 : 0.0;
            }
            const double y0 = m0 + calib.c0 * eps;
            const double y1 = m1 + calib.c1 * eps;
            y = y0 + (y1 - y0) * w;
        }
        data.x(i) = x;
        data.w(i) = w;
        data.y(i) = y;
    }
    return data;
}

Method pl_method(const estimator::EstimateConfig& cfg) {
    return {"pl", [cfg](const Dataset& data, long) {
                const auto r = estimator::estimate(data, cfg);
                if (!r.diagnostics.inference_available) {
                    throw Error(ErrorKind::LeverageOverflow, r.diagnostics.inference_failure);
                }
                return MethodOutcome{r.tau_hat, r.ci_lo, r.ci_hi};
            }};
}

Method ik_method(double alpha) {
    return {"ik", [alpha](const Dataset& data, long) {
                const auto bw = localcomp::ik_bandwidth(data);
                const auto fit = localcomp::local_fuzzy_estimate(data, bw.h);
                const auto interval = inference::ci(fit.tau_hat, fit.se * fit.se, alpha);
                return MethodOutcome{fit.tau_hat, interval.lo, interval.hi};
            }};
}

SimulationReport run_monte_carlo(const SimulationConfig& config, const std::vector<Method>& methods) {
    if (config.reps < 100) {
        throw Error(ErrorKind::InvalidArgument, "need at least 100 replications, got " + std::to_string(config.reps));
    }
    if (methods.empty()) {
        throw Error(ErrorKind::InvalidArgument, "no estimation methods selected");
    }
    const NoiseCalibration calib = calibrate_noise(config.model, config.scenario);
    const double truth = true_tau(config.model);
    const auto reps = static_cast<std::size_t>(config.reps);
    const std::size_t n_methods = methods.size();
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::vector<MethodOutcome>> outcomes(n_methods, std::vector<MethodOutcome>(reps, {nan, nan, nan}));

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) {
            DgpSpec spec{config.model, config.scenario, config.n, child_seed(config.seed, r)};
            const Dataset data = gen_dataset(spec, calib);
            for (std::size_t m = 0; m < n_methods; ++m) {
                try {
                    outcomes[m][r] = methods[m].run(data, static_cast<long>(r));
                } catch (const std::exception&) {
                    outcomes[m][r] = {nan, nan, nan};
                }
            }
        }
    };
    unsigned threads = config.threads != 0 ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    SimulationReport report;
    report.config = config;
    report.truth = truth;
    report.reps_completed = config.reps;
    // Reduction in replication order keeps the result independent of threading.
    for (std::size_t m = 0; m < n_methods; ++m) {
        MethodMetrics metrics;
        metrics.name = methods[m].name;
        std::vector<double> estimates(reps, nan);
        double sum_err = 0.0, sum_sq = 0.0, covered = 0.0, length = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
            const auto& o = outcomes[m][r];
            if (!std::isfinite(o.tau_hat) || !std::isfinite(o.lo) || !std::isfinite(o.hi)) {
                ++metrics.failures;
                continue;
            }
            estimates[r] = o.tau_hat;
            const double err = o.tau_hat - truth;
            sum_err += err;
            sum_sq += err * err;
            covered += (o.lo <= truth && truth <= o.hi) ? 1.0 : 0.0;
            length += o.hi - o.lo;
            ++metrics.completed;
        }
        if (static_cast<double>(metrics.failures) > 0.05 * static_cast<double>(config.reps)) {
            throw Error(ErrorKind::ExcessiveFailures, "method '" + metrics.name + "' failed on " +
                                                          std::to_string(metrics.failures) + " of " +
                                                          std::to_string(config.reps) + " replications");
        }
        const auto k = static_cast<double>(metrics.completed);
        metrics.bias = sum_err / k;
        metrics.rmse = std::sqrt(sum_sq / k);
        metrics.ec = covered / k;
        metrics.acl = length / k;
        double ss = 0.0;
        for (const double e : estimates) {
            if (std::isfinite(e)) ss += (e - truth - metrics.bias) * (e - truth - metrics.bias);
        }
        metrics.variance = ss / k;
        report.per_method.push_back(metrics);
        report.estimates.push_back(std::move(estimates));
    }
    return report;
}

}  // namespace rdsemi::simulate
