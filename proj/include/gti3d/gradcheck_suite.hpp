#pragma once

#include <string>
#include <vector>

// Registry of finite-difference checks, one per differentiable op, all in
// double precision on small randomized tensors.
namespace gti3d::diff {

struct OpCheckResult {
    std::string op;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

struct SuiteOptions {
    double tolerance = 1e-4;
    unsigned seed = 1;
    // Name of an op whose analytic gradient is deliberately perturbed before
    // comparison. Used to prove the harness can fail.
    std::string corrupt;
};

// Registered op names in report order.
const std::vector<std::string>& gradcheck_ops();

// Runs every registered check. An unknown `corrupt` name is a ConfigError.
std::vector<OpCheckResult> run_gradcheck_suite(const SuiteOptions& options = {});

} // namespace gti3d::diff
