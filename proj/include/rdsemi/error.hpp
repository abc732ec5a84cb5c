#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rdsemi {

enum class ErrorKind {
    InvalidArgument,
    InsufficientData,
    DegenerateSupport,
    InvalidBasis,
    SegmentTooSmall,
    RankDeficientDesign,
    SeparationDetected,
    DegenerateOutcome,
    NumericalFailure,
    IllConditioned,
    LeverageOverflow,
    DegenerateG,
    InvalidLevel,
    DegenerateQuadraticForm,
    NotSharpDesign,
    PreconditionViolation,
    BandwidthTooSmall,
    WeakDiscontinuity,
    ExcessiveFailures,
    ParseError,
    IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Validation errors are the caller's fault (bad input or design);
// everything else is a numerical failure of the fit itself.
bool is_validation_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace rdsemi
