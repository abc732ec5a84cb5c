#include "rdsemi/cli.hpp"

#include "rdsemi/error.hpp"
#include "rdsemi/estimator.hpp"
#include "rdsemi/io.hpp"
#include "rdsemi/simulate.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace rdsemi::cli {

namespace {

int parse(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool& done) {
    done = false;
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        done = true;
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        done = true;
        return kExitValidation;
    }
    return kExitOk;
}

int report_error(const Error& e, std::ostream& err) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.kind()) ? kExitValidation : kExitNumerical;
}

void print_table(const inference::AteResult& r, std::ostream& out) {
    const auto& d = r.diagnostics;
    out << std::setprecision(6);
    out << "design        " << d.design << " (n = " << d.n << ", left " << d.n_left << ", right " << d.n_right
        << ")\n";
    out << "tau_hat       " << r.tau_hat << "\n";
    out << "se            " << r.se << "\n";
    out << "z             " << r.z << "\n";
    out << "p_value       " << r.p_value << "\n";
    out << "ci (" << 100.0 * (1.0 - r.alpha) << "%)    [" << r.ci_lo << ", " << r.ci_hi << "]\n";
    out << "knots         " << d.knots << ", q = " << d.q << ", " << d.vc_method << " sigma_gamma2 = " << d.sigma_gamma2
        << ", sigma2 = " << d.sigma2 << "\n";
    if (d.design == "fuzzy") {
        out << "propensity    " << d.propensity_knots << " knots per segment, R2 = " << d.propensity_r2 << "\n";
        out << "g             m = " << d.m << (d.g_optimized ? ", optimized" : ", identity")
            << (d.g_fallback ? " (fallback)" : "") << "\n";
    }
    if (!d.inference_available) out << "warning       no standard error: " << d.inference_failure << "\n";
    if (d.degenerate_interval) out << "warning       zero variance estimate; interval is degenerate\n";
}

}  // namespace

int cmd_estimate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Estimate the treatment effect at the cutoff from a CSV with columns x,w,y", "rdsemi estimate"};
    std::string input;
    double cutoff = 0.0;
    std::string design;
    estimator::EstimateConfig cfg;
    std::string vc = "reml";
    bool no_g_opt = false;
    bool json = false;
    bool table = false;
    int knots = 0;
    app.add_option("--input", input, "CSV file with header x,w,y")->required();
    app.add_option("--cutoff", cutoff, "Cutoff of the running variable")->required();
    app.add_option("--design", design, "sharp or fuzzy")->required()->check(CLI::IsMember({"sharp", "fuzzy"}));
    app.add_option("--q", cfg.q, "Radial basis degree (exponent 2q+1)")->check(CLI::Range(1, 3));
    app.add_option("--m", cfg.m, "Polynomial order of g")->check(CLI::Range(1, 7));
    app.add_option("--alpha", cfg.alpha, "One minus the confidence level");
    app.add_option("--vc", vc, "Variance-component method")->check(CLI::IsMember({"ml", "reml"}));
    app.add_option("--knots", knots, "Number of radial knots (default rule when omitted)");
    app.add_flag("--no-g-opt", no_g_opt, "Use g(t) = t");
    auto* json_flag = app.add_flag("--json", json, "Print the result as JSON");
    app.add_flag("--table", table, "Print a text table (default)")->excludes(json_flag);

    bool done = false;
    const int code = parse(app, args, out, err, done);
    if (done) return code;

    cfg.vc_method = vc == "ml" ? mixedmodel::VcMethod::ML : mixedmodel::VcMethod::REML;
    cfg.optimize_g = !no_g_opt;
    if (knots > 0) cfg.knots = knots;

    try {
        const Design kind = design == "sharp" ? Design::Sharp : Design::Fuzzy;
        const Dataset data = io::load_csv(input, cutoff, kind, &err);
        const auto result = estimator::estimate(data, cfg);
        if (!result.diagnostics.inference_available) {
            err << "warning: point estimate only; " << result.diagnostics.inference_failure << "\n";
        }
        if (json) {
            out << io::to_json(result).dump(2) << "\n";
        } else {
            print_table(result, out);
        }
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int cmd_simulate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Monte Carlo study on the built-in data-generating processes", "rdsemi simulate"};
    std::string model = "M1";
    std::string scenario = "1";
    simulate::SimulationConfig config;
    std::string methods = "pl,ik";
    std::string out_path;
    unsigned threads = 0;
    estimator::EstimateConfig cfg;
    std::string vc = "reml";
    app.add_option("--model", model, "M1, M2 or M3")->check(CLI::IsMember({"M1", "M2", "M3"}));
    app.add_option("--scenario", scenario, "1, 2 or sharp")->check(CLI::IsMember({"1", "2", "sharp"}));
    app.add_option("--n", config.n, "Sample size per replication")->check(CLI::PositiveNumber);
    app.add_option("--reps", config.reps, "Number of replications (>= 100)");
    app.add_option("--seed", config.seed, "Master seed");
    app.add_option("--methods", methods, "Comma-separated subset of pl,ik");
    app.add_option("--out", out_path, "Write the JSON report here instead of stdout");
    app.add_option("--threads", threads, "Worker threads (default: RDSEMI_THREADS or all cores)");
    app.add_option("--m", cfg.m, "Polynomial order of g")->check(CLI::Range(1, 7));
    app.add_option("--q", cfg.q, "Radial basis degree")->check(CLI::Range(1, 3));
    app.add_option("--vc", vc, "Variance-component method")->check(CLI::IsMember({"ml", "reml"}));

    bool done = false;
    const int code = parse(app, args, out, err, done);
    if (done) return code;

    config.model = model == "M1" ? simulate::Model::M1 : model == "M2" ? simulate::Model::M2 : simulate::Model::M3;
    config.scenario = scenario == "1"   ? simulate::Scenario::UAHolds
                      : scenario == "2" ? simulate::Scenario::UAViolated
                                        : simulate::Scenario::Sharp;
    cfg.vc_method = vc == "ml" ? mixedmodel::VcMethod::ML : mixedmodel::VcMethod::REML;
    if (threads == 0) {
        if (const char* env = std::getenv("RDSEMI_THREADS")) {
            try {
                threads = static_cast<unsigned>(std::stoul(env));
            } catch (const std::exception&) {
                err << "error: RDSEMI_THREADS must be a non-negative integer\n";
                return kExitValidation;
            }
        }
    }
    config.threads = threads;

    std::vector<simulate::Method> selected;
    std::vector<std::string> names;
    std::stringstream list(methods);
    for (std::string name; std::getline(list, name, ',');) {
        if (name == "pl") {
            selected.push_back(simulate::pl_method(cfg));
        } else if (name == "ik") {
            selected.push_back(simulate::ik_method(cfg.alpha));
        } else {
            err << "error: unknown method '" << name << "' (expected pl or ik)\n";
            return kExitValidation;
        }
        names.push_back(name);
    }

    try {
        const auto report = simulate::run_monte_carlo(config, selected);
        auto json = io::to_json(report);
        json["config"]["methods"] = names;
        json["config"]["m"] = cfg.m;
        json["config"]["q"] = cfg.q;
        json["config"]["vc"] = vc;
        const std::string text = json.dump(2) + "\n";
        if (out_path.empty()) {
            out << text;
        } else {
            std::ofstream file(out_path, std::ios::binary);
            if (!file) {
                err << "error: cannot write '" << out_path << "'\n";
                return kExitValidation;
            }
            file << text;
            err << "wrote " << out_path << "\n";
        }
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    static const char* usage =
        "usage: rdsemi <command> [options]\n"
        "commands:\n"
        "  estimate   estimate the effect at the cutoff from a CSV file\n"
        "  simulate   run a Monte Carlo study and write a JSON report\n"
        "run 'rdsemi <command> --help' for the options of a command\n";
    if (args.empty()) {
        err << usage;
        return kExitValidation;
    }
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    if (args[0] == "estimate") return cmd_estimate(rest, out, err);
    if (args[0] == "simulate") return cmd_simulate(rest, out, err);
    if (args[0] == "--help" || args[0] == "-h") {
        out << usage;
        return kExitOk;
    }
    err << "error: unknown command '" << args[0] << "'\n" << usage;
    return kExitValidation;
}

}  // namespace rdsemi::cli
