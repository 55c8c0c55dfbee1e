#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gti3d/errors.hpp"
#include "gti3d/gradcheck.hpp"
#include "gti3d/ops.hpp"

using namespace gti3d;
using namespace gti3d::diff;

namespace {

Tensor4<double> random_tensor(Dims4 d, unsigned seed) { return Tensor4<double>(d, random_normal(d.size(), seed)); }

// Straightforward 7-deep loop used as the reference for the tuned kernel.
Tensor4<double> conv3d_direct(const Tensor4<double>& x, const std::vector<double>& w, const std::vector<double>& b,
                              const Conv3dShape& s) {
    const Dims4 xd = x.dims();
    const int od = (xd.d + 2 * s.pad[0] - s.kernel[0]) / s.stride[0] + 1;
    const int oh = (xd.h + 2 * s.pad[1] - s.kernel[1]) / s.stride[1] + 1;
    const int ow = (xd.w + 2 * s.pad[2] - s.kernel[2]) / s.stride[2] + 1;
    Tensor4<double> y(Dims4{od, s.c_out, oh, ow});
    for (int o = 0; o < s.c_out; ++o)
        for (int z = 0; z < od; ++z)
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c) {
                    double acc = b[o];
                    for (int i = 0; i < s.c_in; ++i)
                        for (int kz = 0; kz < s.kernel[0]; ++kz)
                            for (int kr = 0; kr < s.kernel[1]; ++kr)
                                for (int kc = 0; kc < s.kernel[2]; ++kc) {
                                    const int zz = z * s.stride[0] - s.pad[0] + kz;
                                    const int rr = r * s.stride[1] - s.pad[1] + kr;
                                    const int cc = c * s.stride[2] - s.pad[2] + kc;
                                    if (zz < 0 || zz >= xd.d || rr < 0 || rr >= xd.h || cc < 0 || cc >= xd.w) continue;
                                    const std::size_t wi =
                                        (((static_cast<std::size_t>(o) * s.c_in + i) * s.kernel[0] + kz) * s.kernel[1] +
                                         kr) * s.kernel[2] + kc;
                                    acc += w[wi] * x.at(zz, i, rr, cc);
                                }
                    y.at(z, o, r, c) = acc;
                }
    return y;
}

} // namespace

TEST(Conv3d, HandComputedTwoByTwoKernel) {
    Tensor4<double> x(Dims4{1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Conv3dShape s{1, 1, {1, 2, 2}, {1, 1, 1}, {0, 0, 0}};
    const std::vector<double> w{1, 1, 1, 1}, b{0.5};
    const auto y = conv3d<double>(x, w, b, s);
    ASSERT_EQ(y.dims(), (Dims4{1, 1, 2, 2}));
    EXPECT_DOUBLE_EQ(y[0], 12.5);
    EXPECT_DOUBLE_EQ(y[1], 16.5);
    EXPECT_DOUBLE_EQ(y[2], 24.5);
    EXPECT_DOUBLE_EQ(y[3], 28.5);
}

TEST(Conv3d, MatchesDirectLoopAcrossGeometries) {
    const Conv3dShape shapes[] = {
        {2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}},
        {4, 3, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}},
        {2, 3, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}},
        {1, 3, {2, 2, 1}, {2, 1, 1}, {0, 0, 0}},
    };
    unsigned seed = 1;
    for (const auto& s : shapes) {
        const auto x = random_tensor({4, 3, 7, 6}, seed++);
        const auto w = random_normal(s.weight_count(), seed++);
        const auto b = random_normal(s.c_out, seed++);
        const auto y = conv3d<double>(x, w, b, s);
        const auto ref = conv3d_direct(x, w, b, s);
        ASSERT_EQ(y.dims(), ref.dims());
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
}

TEST(Conv3d, ChannelMismatchIsConfigError) {
    const Conv3dShape s{1, 2, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}};
    EXPECT_THROW(s.output_dims(Dims4{1, 3, 4, 4}), ConfigError);
}

TEST(Conv3d, BackwardAccumulates) {
    const Conv3dShape s{2, 1, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}};
    const auto x = random_tensor({2, 1, 4, 4}, 5);
    const auto w = random_normal(s.weight_count(), 6);
    const Tensor4<double> gy(s.output_dims(x.dims()), 1.0);
    Tensor4<double> gx1(x.dims()), gx2(x.dims());
    std::vector<double> gw1(w.size()), gb1(2), gw2(w.size()), gb2(2);
    conv3d_backward<double>(x, w, s, gy, &gx1, gw1, gb1);
    conv3d_backward<double>(x, w, s, gy, &gx2, gw2, gb2);
    conv3d_backward<double>(x, w, s, gy, &gx2, gw2, gb2);
    for (std::size_t i = 0; i < gx1.size(); ++i) EXPECT_NEAR(gx2[i], 2 * gx1[i], 1e-12);
    for (std::size_t i = 0; i < gw1.size(); ++i) EXPECT_NEAR(gw2[i], 2 * gw1[i], 1e-12);
    // Bias gradient of a sum is the number of output cells per channel.
    EXPECT_DOUBLE_EQ(gb1[0], 2 * 4 * 4);
}

TEST(MaxPool3d, HandExampleAndTies) {
    Tensor4<double> x(Dims4{1, 1, 2, 4}, std::vector<double>{1, 5, 2, 2, 3, 4, 2, 2});
    const auto r = maxpool3d(x, PoolShape{});
    ASSERT_EQ(r.y.dims(), (Dims4{1, 1, 1, 2}));
    EXPECT_EQ(r.y[0], 5);
    EXPECT_EQ(r.y[1], 2);
    EXPECT_EQ(r.argmax[0], 1u);
    EXPECT_EQ(r.argmax[1], 2u);  // four-way tie: first cell in scan order

    Tensor4<double> gx(x.dims());
    maxpool3d_backward<double>(r.argmax, Tensor4<double>(r.y.dims(), std::vector<double>{10, 20}), gx);
    EXPECT_EQ(gx.vec(), (std::vector<double>{0, 10, 20, 0, 0, 0, 0, 0}));
}

TEST(Dense, HandExample) {
    const std::vector<double> x{1, 1}, w{1, 2, 3, 4}, b{0.5, -1};
    const auto y = dense<double>(x, w, b, 2);
    EXPECT_EQ(y, (std::vector<double>{3.5, 6.0}));
    std::vector<double> gx(2), gw(4), gb(2);
    dense_backward<double>(x, w, std::vector<double>{1, 2}, gx, gw, gb);
    EXPECT_EQ(gx, (std::vector<double>{7, 10}));
    EXPECT_EQ(gw, (std::vector<double>{1, 1, 2, 2}));
    EXPECT_EQ(gb, (std::vector<double>{1, 2}));
}

TEST(Relu, ForwardAndSubgradientAtZero) {
    Tensor4<double> x(Dims4{1, 1, 1, 3}, std::vector<double>{-1, 0, 2});
    EXPECT_EQ(relu(x).vec(), (std::vector<double>{0, 0, 2}));
    Tensor4<double> gx(x.dims());
    relu_backward<double>(x, Tensor4<double>(x.dims(), 1.0), gx);
    EXPECT_EQ(gx.vec(), (std::vector<double>{0, 0, 1}));
}

TEST(SpatialSoftmax, ClosedFormAndNormalization) {
    Tensor4<double> x(Dims4{1, 1, 1, 2}, std::vector<double>{0.0, std::log(3.0)});
    const auto y = spatial_softmax(x);
    EXPECT_NEAR(y[0], 0.25, 1e-15);
    EXPECT_NEAR(y[1], 0.75, 1e-15);

    const auto big = spatial_softmax(random_tensor({3, 2, 4, 5}, 3));
    for (int d = 0; d < 3; ++d)
        for (int c = 0; c < 2; ++c) {
            const double* s = big.slice(d, c);
            EXPECT_NEAR(std::accumulate(s, s + 20, 0.0), 1.0, 1e-12);
        }
    // Max subtraction keeps huge logits finite.
    Tensor4<double> huge(Dims4{1, 1, 1, 2}, std::vector<double>{1000.0, 1000.0});
    EXPECT_NEAR(spatial_softmax(huge)[0], 0.5, 1e-15);
}

TEST(KlDivergence, ClosedFormValues) {
    Tensor4<double> p(Dims4{1, 1, 1, 2}, std::vector<double>{0.5, 0.5});
    Tensor4<double> q(Dims4{1, 1, 1, 2}, std::vector<double>{0.25, 0.75});
    const double expect = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
    EXPECT_NEAR(kl_divergence(p, q), expect, 1e-15);
    EXPECT_EQ(kl_divergence(p, p), 0.0);

    // Mean over slices: second slice identical contributes 0.
    Tensor4<double> p2(Dims4{2, 1, 1, 2}, std::vector<double>{0.5, 0.5, 0.5, 0.5});
    Tensor4<double> q2(Dims4{2, 1, 1, 2}, std::vector<double>{0.25, 0.75, 0.5, 0.5});
    EXPECT_NEAR(kl_divergence(p2, q2), expect / 2.0, 1e-15);
}

TEST(KlDivergence, RejectsUnnormalizedInput) {
    Tensor4<double> p(Dims4{1, 1, 1, 2}, std::vector<double>{0.5, 0.5});
    Tensor4<double> q(Dims4{1, 1, 1, 2}, std::vector<double>{0.5, 0.6});
    EXPECT_THROW(kl_divergence(p, q), ContractViolation);
    EXPECT_THROW(kl_divergence(q, p), ContractViolation);
}

TEST(KlDivergence, BackwardIsMinusPOverQ) {
    Tensor4<double> p(Dims4{1, 1, 1, 2}, std::vector<double>{0.5, 0.5});
    Tensor4<double> q(Dims4{1, 1, 1, 2}, std::vector<double>{0.25, 0.75});
    Tensor4<double> g(q.dims());
    kl_divergence_backward(p, q, 2.0, g);
    EXPECT_NEAR(g[0], -2.0 * 0.5 / 0.25, 1e-12);
    EXPECT_NEAR(g[1], -2.0 * 0.5 / 0.75, 1e-12);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
    const std::vector<double> z(4, 0.0);
    EXPECT_NEAR(cross_entropy<double>(z, 1), std::log(4.0), 1e-15);
    std::vector<double> g(4, 0.0);
    cross_entropy_backward<double>(z, 1, 1.0, g);
    EXPECT_EQ(g, (std::vector<double>{0.25, -0.75, 0.25, 0.25}));
    EXPECT_THROW(cross_entropy<double>(z, 4), InputError);
    EXPECT_THROW(cross_entropy<double>(z, -1), InputError);
}

TEST(Pools, AveragesAndBackward) {
    Tensor4<double> x(Dims4{2, 1, 1, 2}, std::vector<double>{1, 3, 5, 7});
    EXPECT_EQ(global_avg_pool(x), std::vector<double>{4.0});
    EXPECT_EQ(spatial_avg_pool(x), (std::vector<double>{2.0, 6.0}));
    Tensor4<double> g(x.dims());
    spatial_avg_pool_backward<double>(std::vector<double>{2.0, 4.0}, g);
    EXPECT_EQ(g.vec(), (std::vector<double>{1, 1, 2, 2}));
}
