#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gti3d/errors.hpp"
#include "gti3d/gradcheck.hpp"
#include "gti3d/gradcheck_suite.hpp"

using namespace gti3d;
using namespace gti3d::diff;

TEST(GradCheck, AcceptsExactGradientAndFlagsWrongOne) {
    const std::vector<double> x{0.3, -1.2, 2.0};
    auto f = [](std::span<const double> v) { return v[0] * v[0] + 3.0 * v[1] + std::sin(v[2]); };
    const std::vector<double> good{0.6, 3.0, std::cos(2.0)};
    EXPECT_LT(grad_check(f, x, good).max_relative_error, 1e-8);
    const std::vector<double> bad{0.6, 3.1, std::cos(2.0)};
    const auto r = grad_check(f, x, bad);
    EXPECT_GT(r.max_relative_error, 1e-2);
    EXPECT_EQ(r.worst_index, 1u);
}

TEST(GradCheck, SkipPredicateLeavesCoordinatesOut) {
    const std::vector<double> x{1.0, 2.0};
    GradCheckOptions o;
    o.skip = [](std::size_t i) { return i == 1; };
    const auto r = grad_check([](std::span<const double> v) { return v[0] + v[1]; }, x, std::vector<double>{1.0, 99.0}, o);
    EXPECT_EQ(r.checked, 1u);
    EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(GradCheckSuite, RegistersEveryOpOnce) {
    const auto& ops = gradcheck_ops();
    const std::set<std::string> unique(ops.begin(), ops.end());
    EXPECT_EQ(unique.size(), ops.size());
    const std::set<std::string> expected{"conv3d",        "maxpool3d",     "dense",  "relu",
                                         "spatial_softmax", "kl_divergence", "cross_entropy", "generate_grid",
                                         "sample",        "gt_forward",    "guided_loss"};
    EXPECT_EQ(unique, expected);
}

TEST(GradCheckSuite, AllOpsPassAtDoublePrecision) {
    for (const auto& r : run_gradcheck_suite()) {
        EXPECT_TRUE(r.passed) << r.op << " max rel err " << r.max_relative_error;
        EXPECT_GT(r.checked, 0u) << r.op;
    }
}

TEST(GradCheckSuite, CorruptedBackwardFailsOnlyThatOp) {
    SuiteOptions o;
    o.corrupt = "generate_grid";
    for (const auto& r : run_gradcheck_suite(o)) EXPECT_EQ(r.passed, r.op != "generate_grid") << r.op;
    o.corrupt = "no_such_op";
    EXPECT_THROW(run_gradcheck_suite(o), ConfigError);
}
