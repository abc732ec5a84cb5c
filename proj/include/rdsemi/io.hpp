#pragma once

#include "rdsemi/dataset.hpp"
#include "rdsemi/inference.hpp"
#include "rdsemi/simulate.hpp"

#include "json.hpp"

#include <iosfwd>
#include <string>

namespace rdsemi::io {

// Reads a header row naming at least the columns x, w, y (any order, extra
// columns ignored). Errors cite 1-based line numbers. Summary statistics go
// to `log` when given.
Dataset load_csv(const std::string& path, double cutoff, Design design, std::ostream* log = nullptr);
Dataset parse_csv(std::istream& in, double cutoff, Design design, std::ostream* log = nullptr);

// Writes x,w,y with round-trip precision.
void save_csv(const Dataset& data, const std::string& path);
void write_csv(const Dataset& data, std::ostream& out);

nlohmann::json to_json(const inference::AteResult& result);
nlohmann::json to_json(const simulate::SimulationReport& report);

}  // namespace rdsemi::io
