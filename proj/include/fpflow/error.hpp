#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fpflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A coefficient function returned a non-finite value.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Two fields (or a field and a coefficient set) live on different grids.
class GridMismatch : public Error {
public:
    using Error::Error;
};

/// Violated precondition on user-supplied arguments.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Newton (and the Picard fallback) failed to reduce the resolvent residual.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, std::vector<double> last_iterate,
                   std::vector<double> residual_history, int stage = -1)
        : Error(what),
          last_iterate(std::move(last_iterate)),
          residual_history(std::move(residual_history)),
          stage(stage) {}

    std::vector<double> last_iterate;
    std::vector<double> residual_history;
    int stage;  ///< index into the eps schedule, -1 when not staged
};

/// A probability field left the admissible set by more than roundoff.
class InvarianceViolation : public Error {
public:
    using Error::Error;
};

}  // namespace fpflow
