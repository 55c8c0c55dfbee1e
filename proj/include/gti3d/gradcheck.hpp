#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace gti3d::diff {

struct GradCheckOptions {
    double step = 1e-5;
    double denominator_floor = 1e-6;
    // Coordinates for which skip(i) is true are left out of the sweep
    // (known kinks such as relu at exactly 0).
    std::function<bool(std::size_t)> skip;
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Central differences (f(x+h) - f(x-h)) / 2h against `analytic`, element-wise.
// Relative error is |a - n| / max(|a|, |n|, denominator_floor).
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x, std::span<const double> analytic,
                           const GradCheckOptions& options = {});

// Deterministic standard-normal vector, used for random cotangent projections.
std::vector<double> random_normal(std::size_t n, unsigned seed, double scale = 1.0);

} // namespace gti3d::diff
