#pragma once

#include "rdsemi/dataset.hpp"
#include "rdsemi/estimator.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rdsemi::simulate {

enum class Model { M1, M2, M3 };
enum class Scenario { UAHolds, UAViolated, Sharp };

std::string to_string(Model model);
std::string to_string(Scenario scenario);

// Running variable X ~ U(-1, 1), cutoff 0.
struct DgpSpec {
    Model model = Model::M1;
    Scenario scenario = Scenario::UAHolds;
    long n = 500;
    std::uint64_t seed = 0;
};

struct NoiseCalibration {
    double sigma_eta2 = 0.0;  // outcome noise, unconfounded scenario
    double sigma_eps2 = 0.0;  // confounder variance left of the cutoff
    double c0 = 0.0;          // confounder loading of Y(0)
    double c1 = 0.0;          // confounder loading of Y(1)
};

// E[Y(arm) | X = x].
double dgp_mu(Model model, double x, int arm);
double true_tau(Model model);
// Treatment logit without the confounder: 0.5x + 0.2x^2 + 2*1(x >= 0) - 1.
double treatment_logit(double x);

// Noise scales giving R^2 = 0.75, from a 10^6-draw Monte Carlo with a
// fixed internal seed. Cached per (model, scenario); thread-safe.
NoiseCalibration calibrate_noise(Model model, Scenario scenario);
NoiseCalibration calibrate_noise_uncached(Model model, Scenario scenario, long draws, std::uint64_t seed);

Dataset gen_dataset(const DgpSpec& spec, const NoiseCalibration& calib);

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z);
// Independent stream seed for replication `rep`.
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t rep);

struct MethodOutcome {
    double tau_hat = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Estimation method run once per replication. `rep` lets callers record
// per-replication detail; implementations must be thread-safe.
struct Method {
    std::string name;
    std::function<MethodOutcome(const Dataset& data, long rep)> run;
};

Method pl_method(const estimator::EstimateConfig& cfg);
Method ik_method(double alpha = 0.05);

struct MethodMetrics {
    std::string name;
    double rmse = 0.0;
    double bias = 0.0;
    double ec = 0.0;
    double acl = 0.0;
    double variance = 0.0;
    long completed = 0;
    long failures = 0;
};

struct SimulationConfig {
    Model model = Model::M1;
    Scenario scenario = Scenario::UAHolds;
    long n = 500;
    long reps = 1000;
    std::uint64_t seed = 0;
    // 0 means std::thread::hardware_concurrency().
    unsigned threads = 0;
};

struct SimulationReport {
    SimulationConfig config;
    double truth = 0.0;
    long reps_completed = 0;
    std::vector<MethodMetrics> per_method;
    // estimates[m][r] is NaN when method m failed on replication r.
    std::vector<std::vector<double>> estimates;
};

// Throws ExcessiveFailures when any method fails on more than 5% of reps.
SimulationReport run_monte_carlo(const SimulationConfig& config, const std::vector<Method>& methods);

}  // namespace rdsemi::simulate
