#pragma once

#include <stdexcept>
#include <string>

namespace torus_spectra {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateLattice : Error { using Error::Error; };
struct DependentVectors : Error { using Error::Error; };
struct NotSaturated : Error { using Error::Error; };
struct NotSelfAdjoint : Error { using Error::Error; };
struct InvalidParams : Error { using Error::Error; };
struct ConstantsTooSmall : Error { using Error::Error; };
struct CutoffLeak : Error { using Error::Error; };
struct InsufficientMargin : Error { using Error::Error; };
struct NothingToReduce : Error { using Error::Error; };
struct ParamsInvalidForSublattice : Error { using Error::Error; };
struct SolverFailure : Error { using Error::Error; };
struct WindowExhausted : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace torus_spectra
