#pragma once

#include <stdexcept>
#include <string>

namespace mls {

/// Invalid run parameters: bad config keys, unsupported degrees, malformed
/// chains. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure during a run (assembly, factorization, non-convergence).
/// Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// An evaluation point has no center inside the weight support.
class CoverageError : public NumericalError {
  public:
    explicit CoverageError(const std::string& what) : NumericalError(what) {}
};

/// The neighbor set cannot determine a degree-m polynomial; carries the
/// singular-value diagnostic of the local basis matrix.
class DeficientNeighborhoodError : public NumericalError {
  public:
    DeficientNeighborhoodError(const std::string& what, double sigma_min, double sigma_max)
        : NumericalError(what), sigma_min(sigma_min), sigma_max(sigma_max) {}

    double sigma_min;
    double sigma_max;
};

}  // namespace mls
