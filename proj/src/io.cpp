#include "rdsemi/io.hpp"

#include "rdsemi/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

namespace rdsemi::io {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string unquote(std::string_view s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

double parse_number(std::string_view field, long line, const char* column) {
    field = trim(field);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": cannot parse " + column + " value '" +
                                               std::string(field) + "'");
    }
    return value;
}

}  // namespace

Dataset parse_csv(std::istream& in, double cutoff, Design design, std::ostream* log) {
    std::string line;
    long line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string_view view = line;
        if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
        for (const auto field : split(view)) header.push_back(unquote(field));
        break;
    }
    if (header.empty()) {
        throw Error(ErrorKind::ParseError, "missing header row");
    }
    std::array<std::size_t, 3> index{};
    const std::array<const char*, 3> names{"x", "w", "y"};
    for (std::size_t c = 0; c < names.size(); ++c) {
        const auto it = std::find(header.begin(), header.end(), names[c]);
        if (it == header.end()) {
            throw Error(ErrorKind::ParseError, std::string("missing column '") + names[c] + "' in header");
        }
        index[c] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<double> xs, ws, ys;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line);
        if (fields.size() < header.size()) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(header.size()) + " fields, found " +
                                                   std::to_string(fields.size()));
        }
        const double x = parse_number(fields[index[0]], line_no, "x");
        const double w = parse_number(fields[index[1]], line_no, "w");
        const double y = parse_number(fields[index[2]], line_no, "y");
        if (w != 0.0 && w != 1.0) {
            throw Error(ErrorKind::ParseError,
                        "line " + std::to_string(line_no) + ": treatment w must be 0 or 1, found " +
                            std::string(trim(fields[index[1]])));
        }
        xs.push_back(x);
        ws.push_back(w);
        ys.push_back(y);
    }
    if (xs.empty()) {
        throw Error(ErrorKind::InsufficientData, "no data rows after the header");
    }

    Dataset data;
    data.cutoff = cutoff;
    data.design = design;
    const auto n = static_cast<Eigen::Index>(xs.size());
    data.x = Eigen::Map<const VectorXd>(xs.data(), n);
    data.w = Eigen::Map<const VectorXd>(ws.data(), n);
    data.y = Eigen::Map<const VectorXd>(ys.data(), n);
    if (log) {
        *log << "loaded " << n << " rows; x in [" << data.x.minCoeff() << ", " << data.x.maxCoeff()
             << "]; treated fraction " << data.w.mean() << " (left " << data.count_left() << ", right "
             << data.count_right() << ")\n";
    }
    return data;
}

Dataset load_csv(const std::string& path, double cutoff, Design design, std::ostream* log) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
    }
    return parse_csv(in, cutoff, design, log);
}

void write_csv(const Dataset& data, std::ostream& out) {
    out << "x,w,y\n";
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        out << data.x(i) << ',' << static_cast<int>(data.w(i)) << ',' << data.y(i) << '\n';
    }
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
    }
    write_csv(data, out);
}

namespace {

// NaN marks unavailable inference; keep it null in the document itself.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const inference::AteResult& r) {
    const auto& d = r.diagnostics;
    nlohmann::json diag = {
        {"design", d.design},
        {"n", d.n},
        {"n_left", d.n_left},
        {"n_right", d.n_right},
        {"q", d.q},
        {"knots", d.knots},
        {"knots_collapsed", d.knots_collapsed},
        {"m", d.m},
        {"g_coefficients", d.g_coefficients},
        {"g_objective", d.g_objective},
        {"g_optimized", d.g_optimized},
        {"g_fallback", d.g_fallback},
        {"vc_method", d.vc_method},
        {"sigma_gamma2", d.sigma_gamma2},
        {"sigma2", d.sigma2},
        {"lambda", d.lambda},
        {"v_tau", number(d.v_tau)},
        {"max_leverage", d.max_leverage},
        {"degenerate_interval", d.degenerate_interval},
        {"inference_available", d.inference_available},
        {"inference_failure", d.inference_failure},
    };
    if (d.design == "fuzzy") {
        diag["propensity_knots"] = d.propensity_knots;
        diag["propensity_r2"] = d.propensity_r2;
    }
    if (d.g_fallback) diag["g_fallback_reason"] = d.g_fallback_reason;
    return {
        {"tau_hat", number(r.tau_hat)}, {"se", number(r.se)}, {"z", number(r.z)}, {"p_value", number(r.p_value)},
        {"ci", {number(r.ci_lo), number(r.ci_hi)}}, {"alpha", r.alpha}, {"diagnostics", diag},
    };
}

nlohmann::json to_json(const simulate::SimulationReport& report) {
    const auto& c = report.config;
    nlohmann::json per_method = nlohmann::json::object();
    nlohmann::json failures = nlohmann::json::object();
    for (const auto& m : report.per_method) {
        per_method[m.name] = {{"rmse", number(m.rmse)}, {"bias", number(m.bias)}, {"ec", number(m.ec)}, {"acl", number(m.acl)}};
        failures[m.name] = m.failures;
    }
    return {
        {"config",
         {{"model", simulate::to_string(c.model)},
          {"scenario", simulate::to_string(c.scenario)},
          {"n", c.n},
          {"reps", c.reps},
          {"seed", c.seed},
          {"truth", report.truth}}},
        {"per_method", per_method},
        {"reps_completed", report.reps_completed},
        {"failures", failures},
    };
}

}  // namespace rdsemi::io
