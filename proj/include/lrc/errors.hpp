#pragma once

#include <stdexcept>
#include <string>

// Error taxonomy shared by the whole toolkit. The CLI maps these onto exit
// codes: usage problems -> 1, data/config/file problems -> 2, numerical
// failures -> 3.
namespace lrc {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Matrix/vector dimensions don't line up.
struct shape_error : error {
    using error::error;
};

// A caller-supplied value is out of range (bad token id, bad rank, ...).
struct input_error : error {
    using error::error;
};

// A configuration is internally inconsistent or names an impossible goal.
struct config_error : error {
    using error::error;
};

// Numerical failure: Cholesky pivot collapse at max damping, SVD sweep
// limit exceeded, near-zero triangular pivot.
struct numerical_error : error {
    using error::error;
};

// File-level failures, with distinct kinds so tests and users can tell a
// wrong-version file from a damaged one.
struct io_error : error {
    using error::error;
};
struct version_error : io_error {
    using io_error::io_error;
};
struct corrupt_file_error : io_error {
    using io_error::io_error;
};
struct truncated_file_error : io_error {
    using io_error::io_error;
};
// Stats/model pairing mismatch (hash recorded at calibration time).
struct provenance_error : io_error {
    using io_error::io_error;
};

}  // namespace lrc
