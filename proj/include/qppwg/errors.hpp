#pragma once

#include <stdexcept>

namespace qppwg {

// Error taxonomy mirrored by the CLI exit codes: usage 1, config 2, numeric 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace qppwg
