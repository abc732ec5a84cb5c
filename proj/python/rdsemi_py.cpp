#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rdsemi/error.hpp"
#include "rdsemi/estimator.hpp"
#include "rdsemi/io.hpp"
#include "rdsemi/localcomp.hpp"
#include "rdsemi/simulate.hpp"

#include <optional>
#include <sstream>
#include <string>

namespace py = pybind11;
using namespace rdsemi;

namespace {

Design parse_design(const std::string& s) {
    if (s == "sharp") return Design::Sharp;
    if (s == "fuzzy") return Design::Fuzzy;
    throw Error(ErrorKind::InvalidArgument, "design must be 'sharp' or 'fuzzy'");
}

mixedmodel::VcMethod parse_vc(const std::string& s) {
    if (s == "ml") return mixedmodel::VcMethod::ML;
    if (s == "reml") return mixedmodel::VcMethod::REML;
    throw Error(ErrorKind::InvalidArgument, "vc must be 'ml' or 'reml'");
}

simulate::Model parse_model(const std::string& s) {
    if (s == "M1") return simulate::Model::M1;
    if (s == "M2") return simulate::Model::M2;
    if (s == "M3") return simulate::Model::M3;
    throw Error(ErrorKind::InvalidArgument, "model must be M1, M2 or M3");
}

simulate::Scenario parse_scenario(const std::string& s) {
    if (s == "1") return simulate::Scenario::UAHolds;
    if (s == "2") return simulate::Scenario::UAViolated;
    if (s == "sharp") return simulate::Scenario::Sharp;
    throw Error(ErrorKind::InvalidArgument, "scenario must be '1', '2' or 'sharp'");
}

Dataset make_dataset(const VectorXd& x, const VectorXd& w, const VectorXd& y, double cutoff, const std::string& design) {
    Dataset d;
    d.x = x;
    d.w = w;
    d.y = y;
    d.cutoff = cutoff;
    d.design = parse_design(design);
    return d;
}

// Documents cross the boundary as JSON text; the Python layer decodes them.
std::string estimate_json(const VectorXd& x, const VectorXd& w, const VectorXd& y, double cutoff,
                          const std::string& design, int q, int m, std::optional<int> knots, const std::string& vc,
                          double alpha, bool optimize_g) {
    estimator::EstimateConfig cfg;
    cfg.q = q;
    cfg.m = m;
    cfg.knots = knots;
    cfg.vc_method = parse_vc(vc);
    cfg.alpha = alpha;
    cfg.optimize_g = optimize_g;
    const Dataset d = make_dataset(x, w, y, cutoff, design);
    py::gil_scoped_release release;
    return io::to_json(estimator::estimate(d, cfg)).dump();
}

std::string simulate_json(const std::string& model, const std::string& scenario, long n, long reps,
                          std::uint64_t seed, const std::vector<std::string>& methods, unsigned threads, int q, int m,
                          const std::string& vc) {
    simulate::SimulationConfig sc;
    sc.model = parse_model(model);
    sc.scenario = parse_scenario(scenario);
    sc.n = n;
    sc.reps = reps;
    sc.seed = seed;
    sc.threads = threads;
    estimator::EstimateConfig cfg;
    cfg.q = q;
    cfg.m = m;
    cfg.vc_method = parse_vc(vc);
    std::vector<simulate::Method> selected;
    for (const auto& name : methods) {
        if (name == "pl") {
            selected.push_back(simulate::pl_method(cfg));
        } else if (name == "ik") {
            selected.push_back(simulate::ik_method(cfg.alpha));
        } else {
            throw Error(ErrorKind::InvalidArgument, "unknown method '" + name + "' (expected pl or ik)");
        }
    }
    py::gil_scoped_release release;
    auto json = io::to_json(simulate::run_monte_carlo(sc, selected));
    json["config"]["methods"] = methods;
    return json.dump();
}

py::tuple gen_dataset(const std::string& model, const std::string& scenario, long n, std::uint64_t seed) {
    const auto mdl = parse_model(model);
    const auto scn = parse_scenario(scenario);
    const Dataset d = simulate::gen_dataset({mdl, scn, n, seed}, simulate::calibrate_noise(mdl, scn));
    return py::make_tuple(d.x, d.w, d.y);
}

py::dict local_estimate(const VectorXd& x, const VectorXd& w, const VectorXd& y, double cutoff,
                        std::optional<double> h) {
    const Dataset d = make_dataset(x, w, y, cutoff, "fuzzy");
    bool fallback = false;
    if (!h) {
        const auto bw = localcomp::ik_bandwidth(d);
        h = bw.h;
        fallback = bw.fallback;
    }
    const auto fit = localcomp::local_fuzzy_estimate(d, *h);
    py::dict out;
    out["h"] = fit.h;
    out["bandwidth_fallback"] = fallback;
    out["tau_hat"] = fit.tau_hat;
    out["se"] = fit.se;
    out["n_left"] = fit.n_left;
    out["n_right"] = fit.n_right;
    out["outcome_jump"] = fit.outcome_jump;
    out["treatment_jump"] = fit.treatment_jump;
    return out;
}

}  // namespace

PYBIND11_MODULE(_rdsemi, mod) {
    mod.doc() = "Semiparametric two-stage regression-discontinuity estimator";

    // Kept for the interpreter's lifetime; instances carry the error kind.
    static py::handle error_type = py::exception<Error>(mod, "RdsemiError", PyExc_ValueError).release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            exc.attr("validation") = is_validation_error(e.kind());
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    mod.def("_estimate_json", &estimate_json, py::arg("x"), py::arg("w"), py::arg("y"), py::arg("cutoff"),
            py::arg("design"), py::arg("q"), py::arg("m"), py::arg("knots"), py::arg("vc"), py::arg("alpha"),
            py::arg("optimize_g"));
    mod.def("_simulate_json", &simulate_json, py::arg("model"), py::arg("scenario"), py::arg("n"), py::arg("reps"),
            py::arg("seed"), py::arg("methods"), py::arg("threads"), py::arg("q"), py::arg("m"), py::arg("vc"));
    mod.def("gen_dataset", &gen_dataset, py::arg("model"), py::arg("scenario"), py::arg("n"), py::arg("seed"),
            "Simulated (x, w, y) arrays for a model and scenario.");
    mod.def("local_estimate", &local_estimate, py::arg("x"), py::arg("w"), py::arg("y"), py::arg("cutoff") = 0.0,
            py::arg("h") = py::none(), "IK-style local-linear Wald estimate; h defaults to the plug-in bandwidth.");
    mod.def("true_tau", [](const std::string& model) { return simulate::true_tau(parse_model(model)); },
            py::arg("model"));
}
