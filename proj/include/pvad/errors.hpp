#pragma once

#include <stdexcept>
#include <string>

namespace pvad {

// Base for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreement; message names the offending shapes.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration (also covers bad corpus/manifest input).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed file contents (WAV headers, checkpoints, manifests).
struct DataError : Error {
    using Error::Error;
};

// Frame label outside {0,1,2}.
struct LabelError : Error {
    using Error::Error;
};

// Weight patch does not match the parameter layout.
struct PatchError : Error {
    using Error::Error;
};

// Enrollment audio unusable (too short, silent).
struct EnrollmentError : Error {
    using Error::Error;
};

// Metric undefined for the given inputs (e.g. AP with zero positives).
struct MetricError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; carries the last finite value.
struct DivergenceError : Error {
    DivergenceError(const std::string& msg, double last_finite)
        : Error(msg), last_finite_loss(last_finite) {}
    double last_finite_loss;
};

// Checkpoint/patch digest mismatch.
struct CorruptionError : Error {
    using Error::Error;
};

// API contract violation (e.g. backward from a non-scalar loss).
struct ContractError : Error {
    using Error::Error;
};

}  // namespace pvad
