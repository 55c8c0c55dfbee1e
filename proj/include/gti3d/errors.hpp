#pragma once

#include <stdexcept>
#include <string>

namespace gti3d {

// Error taxonomy shared by every module. The CLI maps each class onto a
// distinct process exit code (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-supplied data or arguments (labels out of range, empty splits, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// Inconsistent shapes, unknown tags, invalid intrinsics.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A documented precondition on otherwise well-formed data does not hold.
class ContractViolation : public Error {
public:
    using Error::Error;
};

// On-disk artifact failed validation.
class CorruptData : public Error {
public:
    using Error::Error;
};

// Non-finite values detected during optimization.
class NumericError : public Error {
public:
    using Error::Error;
};

enum class ExitCode : int {
    ok = 0,
    failure = 1,
    input_error = 2,
    config_error = 3,
    contract_violation = 4,
    corrupt_data = 5,
    numeric_error = 6,
};

ExitCode exit_code(const std::exception& e) noexcept;

} // namespace gti3d
