#pragma once

#include <stdexcept>
#include <string>

namespace pltf {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structural problem: mismatched shapes, bad model definitions, bad inputs.
struct ValidationError : Error {
    using Error::Error;
};

/// Numerical failure: the model assigns zero intensity to an observed
/// positive count, or an intermediate quantity became non-finite.
struct SingularModelError : Error {
    using Error::Error;
};

/// File I/O or format failure; the message carries the path.
struct IoError : Error {
    using Error::Error;
};

} // namespace pltf
