#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace rdsemi {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Design { Sharp, Fuzzy };

// Observed sample of an RD design. Units with x == cutoff belong to the
// treated (right-hand) side.
struct Dataset {
    VectorXd x;
    VectorXd w;
    VectorXd y;
    double cutoff = 0.0;
    Design design = Design::Fuzzy;

    Eigen::Index size() const { return x.size(); }
    Eigen::Index count_left() const { return (x.array() < cutoff).count(); }
    Eigen::Index count_right() const { return (x.array() >= cutoff).count(); }
};

// Throws InvalidArgument on length mismatch, non-finite entries or w outside {0,1}.
void validate(const Dataset& data);

inline double above(double x, double cutoff) { return x >= cutoff ? 1.0 : 0.0; }

}  // namespace rdsemi
