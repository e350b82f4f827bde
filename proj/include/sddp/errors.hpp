#pragma once

#include <stdexcept>
#include <string>

namespace sddp {

/// Bad option, bad config file, or an argument outside its documented domain.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data (parse failures, missing files, sizes too
/// small for the requested operation).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch between operands. A kind of data error for exit codes.
struct ShapeError : DataError {
    using DataError::DataError;
};

/// Numerical failure: divergence, non-convergence, rank deficiency.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Process exit codes (also the C API status values).
enum ExitCode : int {
    kExitOk = 0,
    kExitConfigError = 1,
    kExitDataError = 2,
    kExitNumericError = 3,
};

} // namespace sddp
