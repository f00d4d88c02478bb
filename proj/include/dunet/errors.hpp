#pragma once

#include <stdexcept>
#include <string>

namespace dunet {

// Bad input files, malformed datasets, unreadable paths. CLI maps these to exit 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values, domain violations in math ops. CLI maps these to exit 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace dunet
