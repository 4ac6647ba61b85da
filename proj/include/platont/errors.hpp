#pragma once

#include <stdexcept>

namespace platont {

// Domain invariant violated (bad topology, asymmetric matrix, ...).
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unparseable or schema-violating input file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor dimension mismatch; message names expected and actual dims.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN or inf where a finite value is required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. backward without a cached forward pass.
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Zero-norm embedding rows make cosine similarity undefined.
struct DegenerateEmbeddingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested task has no differentiable surrogate.
struct UnsupportedTaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace platont
