#include "rdsemi/dataset.hpp"

#include "rdsemi/error.hpp"

#include <cmath>
#include <string>

namespace rdsemi {

void validate(const Dataset& data) {
    const auto n = data.x.size();
    if (data.w.size() != n || data.y.size() != n) {
        throw Error(ErrorKind::InvalidArgument, "x, w and y must have equal length");
    }
    if (!std::isfinite(data.cutoff)) {
        throw Error(ErrorKind::InvalidArgument, "cutoff must be finite");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(data.x(i)) || !std::isfinite(data.y(i))) {
            throw Error(ErrorKind::InvalidArgument, "non-finite value at row " + std::to_string(i));
        }
        if (data.w(i) != 0.0 && data.w(i) != 1.0) {
            throw Error(ErrorKind::InvalidArgument, "treatment must be 0 or 1 at row " + std::to_string(i));
        }
    }
}

}  // namespace rdsemi
