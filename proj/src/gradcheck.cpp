#include "gti3d/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gti3d/errors.hpp"

namespace gti3d::diff {

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x, std::span<const double> analytic,
                           const GradCheckOptions& options) {
    if (x.size() != analytic.size()) throw ConfigError("grad_check: gradient length differs from input length");
    std::vector<double> probe(x.begin(), x.end());
    GradCheckResult r;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        if (options.skip && options.skip(i)) continue;
        const double orig = probe[i];
        probe[i] = orig + options.step;
        const double up = f(probe);
        probe[i] = orig - options.step;
        const double down = f(probe);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * options.step);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.denominator_floor});
        const double err = std::abs(numeric - analytic[i]) / denom;
        ++r.checked;
        if (err > r.max_relative_error) {
            r.max_relative_error = err;
            r.worst_index = i;
        }
    }
    return r;
}

std::vector<double> random_normal(std::size_t n, unsigned seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

} // namespace gti3d::diff
