#pragma once

#include <stdexcept>
#include <string>

namespace moecast {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// ConfigError -> 2, DataError -> 3, CheckpointError -> 4, anything else -> 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape mismatches and invalid numeric arguments inside the library.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Violated API contract (e.g. backward() on a non-scalar).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace moecast
