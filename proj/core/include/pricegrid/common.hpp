#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace pricegrid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Nominal grid frequency in Hz. Frequencies are stored as per-unit
/// deviations of the nominal value and only converted when reporting.
inline constexpr double kNominalHz = 50.0;

inline constexpr double pu_to_hz(double omega_pu) { return omega_pu * kNominalHz; }
inline constexpr double hz_to_pu(double hz) { return hz / kNominalHz; }

/// Invalid model data: bad topology, parameters out of range, mismatched sizes.
class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The state left the model's validity domain (e.g. a vanishing voltage).
class SingularStateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A Newton iteration did not converge.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// No steady state exists (or was found) for the requested operating point.
class InfeasibleError : public SolverError {
public:
    using SolverError::SolverError;
};

/// Malformed scenario or network description.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw ModelError(message);
    }
}
}  // namespace detail

}  // namespace pricegrid
