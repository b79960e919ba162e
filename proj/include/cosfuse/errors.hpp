#pragma once

#include <stdexcept>
#include <string>

namespace cosfuse {

// Base class for everything this library throws on purpose.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up (matmul inner dims, elementwise mismatch, ...).
struct shape_error : error {
    using error::error;
};

// A vector whose norm is below the 1e-12 guard was used where a direction
// is required (cosine similarity, embedding rows).
struct degenerate_vector_error : error {
    using error::error;
};

// Invalid configuration values (tau <= 0, lambda_f outside [0,1], ...).
struct config_error : error {
    using error::error;
};

// Malformed input file; message carries the line number where known.
struct parse_error : error {
    using error::error;
};

// Empty or otherwise unusable data (empty corpus, empty reference, ...).
struct data_error : error {
    using error::error;
};

// Unknown token or out-of-range id.
struct lookup_error : error {
    using error::error;
};

// An API precondition was violated by the caller.
struct contract_error : error {
    using error::error;
};

// Non-finite value detected during training.
struct numeric_error : error {
    using error::error;
};

// Filesystem failure.
struct io_error : error {
    using error::error;
};

}  // namespace cosfuse
