#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace flagifs {

// Dimensions are small (d <= 4), so every matrix type has a compile-time
// upper bound and lives on the stack. This keeps long orbit loops free of
// heap traffic.
inline constexpr int kMaxDim = 4;
inline constexpr int kMaxPairs = kMaxDim * (kMaxDim - 1) / 2;
inline constexpr int kMaxBundle = kMaxDim + kMaxPairs;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using PairMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxPairs, kMaxPairs>;
using PairVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxPairs, 1>;
using BundleMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxBundle, kMaxBundle>;

enum class ErrorCode {
    InvalidArgument,
    SingularMatrix,
    ModuliCollision,
    ComplexPair,
    ExhaustedFuture,
    DimensionMismatch,
    NoFixedPoint,
    NotInCone,
    NotManeuverable,
    WitnessMiss,
    NotReached,
    RadiusCollapse,
    ConeExit,
    ContractionLost,
    ConfigError,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace flagifs
