#ifndef CELLCONTRAST_ERRORS_HPP
#define CELLCONTRAST_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cellcontrast {

/// Invalid run configuration (unknown keys, out-of-range values).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing files, bad magic numbers, truncated payloads, malformed CSV.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A NaN or infinity showed up where only finite values are allowed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}

#endif
