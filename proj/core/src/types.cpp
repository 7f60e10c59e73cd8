#include "flagifs/types.hpp"

namespace flagifs {

const char* error_name(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::ModuliCollision: return "ModuliCollision";
    case ErrorCode::ComplexPair: return "ComplexPair";
    case ErrorCode::ExhaustedFuture: return "ExhaustedFuture";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoFixedPoint: return "NoFixedPoint";
    case ErrorCode::NotInCone: return "NotInCone";
    case ErrorCode::NotManeuverable: return "NotManeuverable";
    case ErrorCode::WitnessMiss: return "WitnessMiss";
    case ErrorCode::NotReached: return "NotReached";
    case ErrorCode::RadiusCollapse: return "RadiusCollapse";
    case ErrorCode::ConeExit: return "ConeExit";
    case ErrorCode::ContractionLost: return "ContractionLost";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code)
{
}

void fail(ErrorCode code, const std::string& what)
{
    throw Error(code, what);
}

}  // namespace flagifs
