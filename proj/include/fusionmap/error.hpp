#pragma once

#include <stdexcept>
#include <string>

namespace fusionmap {

/// Malformed input data: bad files, inconsistent dimensions, empty inputs.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or command-line usage.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optimization produced a non-finite value.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fusionmap
