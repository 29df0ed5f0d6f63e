#pragma once

#include <stdexcept>
#include <string>

namespace rocket {

// Base class for everything thrown by this library.  Catch sites that only
// care about "did it fail" can catch rocket::Error; the CLI maps subclasses
// to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape mismatch between operands (matmul inner dims, elementwise sizes, ...).
struct DimensionError : Error {
    using Error::Error;
};

// A computation produced or received a non-finite value (NaN/Inf).
struct NumericError : Error {
    using Error::Error;
};

// An architecture, dataset spec or training config violates its constraints.
struct SpecError : Error {
    using Error::Error;
};

// An API was called in a way its contract forbids (e.g. backward on a
// non-scalar node).
struct ContractError : Error {
    using Error::Error;
};

// A file does not conform to its on-disk format.
struct FormatError : Error {
    using Error::Error;
};

// Filesystem-level failure: missing path, unreadable/unwritable file.
struct IoError : Error {
    using Error::Error;
};

}  // namespace rocket
