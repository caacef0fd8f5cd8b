#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace h1 {

enum class ErrorKind {
    InvalidArgument,
    NotInContactPlane,
    BasePointMismatch,
    NotInGroup,
    TooFarFromGroup,
    NonFiniteState,
    TooFewSamples,
    GridTooSmall,
    NotHorizontallyRegular,
    NonUniformGrid,
    NotCongruent,
    DegenerateParams,
    Singular,
    FlowLeftPatch,
    NotNormal,
    IntegrabilityViolation,
    DegenerateReparam,
    SingularCell,
    DegenerateMetric,
    ClosedSurfaceUnsupported,
    ParseError,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NotInContactPlane: return "NotInContactPlane";
    case ErrorKind::BasePointMismatch: return "BasePointMismatch";
    case ErrorKind::NotInGroup: return "NotInGroup";
    case ErrorKind::TooFarFromGroup: return "TooFarFromGroup";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::GridTooSmall: return "GridTooSmall";
    case ErrorKind::NotHorizontallyRegular: return "NotHorizontallyRegular";
    case ErrorKind::NonUniformGrid: return "NonUniformGrid";
    case ErrorKind::NotCongruent: return "NotCongruent";
    case ErrorKind::DegenerateParams: return "DegenerateParams";
    case ErrorKind::Singular: return "Singular";
    case ErrorKind::FlowLeftPatch: return "FlowLeftPatch";
    case ErrorKind::NotNormal: return "NotNormal";
    case ErrorKind::IntegrabilityViolation: return "IntegrabilityViolation";
    case ErrorKind::DegenerateReparam: return "DegenerateReparam";
    case ErrorKind::SingularCell: return "SingularCell";
    case ErrorKind::DegenerateMetric: return "DegenerateMetric";
    case ErrorKind::ClosedSurfaceUnsupported: return "ClosedSurfaceUnsupported";
    case ErrorKind::ParseError: return "ParseError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised when a quantity measured against a tolerance fails; `value` is the offending magnitude.
class ToleranceError : public Error {
public:
    ToleranceError(ErrorKind kind, const std::string& what, double value)
        : Error(kind, what + " (value " + std::to_string(value) + ")"), value_(value)
    {
    }

    double value() const noexcept { return value_; }

private:
    double value_;
};

} // namespace h1
