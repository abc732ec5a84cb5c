#include "rdsemi/error.hpp"

namespace rdsemi {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::InsufficientData: return "InsufficientData";
        case ErrorKind::DegenerateSupport: return "DegenerateSupport";
        case ErrorKind::InvalidBasis: return "InvalidBasis";
        case ErrorKind::SegmentTooSmall: return "SegmentTooSmall";
        case ErrorKind::RankDeficientDesign: return "RankDeficientDesign";
        case ErrorKind::SeparationDetected: return "SeparationDetected";
        case ErrorKind::DegenerateOutcome: return "DegenerateOutcome";
        case ErrorKind::NumericalFailure: return "NumericalFailure";
        case ErrorKind::IllConditioned: return "IllConditioned";
        case ErrorKind::LeverageOverflow: return "LeverageOverflow";
        case ErrorKind::DegenerateG: return "DegenerateG";
        case ErrorKind::InvalidLevel: return "InvalidLevel";
        case ErrorKind::DegenerateQuadraticForm: return "DegenerateQuadraticForm";
        case ErrorKind::NotSharpDesign: return "NotSharpDesign";
        case ErrorKind::PreconditionViolation: return "PreconditionViolation";
        case ErrorKind::BandwidthTooSmall: return "BandwidthTooSmall";
        case ErrorKind::WeakDiscontinuity: return "WeakDiscontinuity";
        case ErrorKind::ExcessiveFailures: return "ExcessiveFailures";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_validation_error(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NumericalFailure:
        case ErrorKind::IllConditioned:
        case ErrorKind::LeverageOverflow:
        case ErrorKind::DegenerateG:
        case ErrorKind::DegenerateQuadraticForm:
        case ErrorKind::RankDeficientDesign:
        case ErrorKind::ExcessiveFailures:
            return false;
        default:
            return true;
    }
}

}  // namespace rdsemi
