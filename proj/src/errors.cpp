#include "gti3d/errors.hpp"

namespace gti3d {

ExitCode exit_code(const std::exception& e) noexcept {
    if (dynamic_cast<const InputError*>(&e)) return ExitCode::input_error;
    if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::config_error;
    if (dynamic_cast<const ContractViolation*>(&e)) return ExitCode::contract_violation;
    if (dynamic_cast<const CorruptData*>(&e)) return ExitCode::corrupt_data;
    if (dynamic_cast<const NumericError*>(&e)) return ExitCode::numeric_error;
    return ExitCode::failure;
}

} // namespace gti3d
