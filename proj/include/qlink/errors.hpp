#pragma once

#include <stdexcept>
#include <string>

namespace qlink {

// Dimension/capacity limit exceeded (tensor products, statevector sizes).
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

// Requested value outside the reachable range of a solver or model.
struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& what) : std::runtime_error(what) {}
};

// Nonlinear fit did not converge or is not identifiable.
struct FitError : std::runtime_error {
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

// Invariant or precondition violation on domain objects and configs.
struct ValidationError : std::invalid_argument {
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

} // namespace qlink
