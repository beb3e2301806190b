#pragma once

#include <stdexcept>
#include <string>

namespace vac {

// Error taxonomy mirrors the CLI exit codes: config -> 1, numeric -> 2, io -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const NumericError*>(&e)) return 2;
    if (dynamic_cast<const IoError*>(&e)) return 3;
    return 2;
}

} // namespace vac
