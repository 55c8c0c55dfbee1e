#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gti3d/errors.hpp"
#include "gti3d/gradcheck.hpp"
#include "gti3d/model.hpp"

using namespace gti3d;
using namespace gti3d::model;

namespace {

NetworkSpec small_spec(int taps) {
    NetworkSpec s;
    s.classes = 3;
    s.frames = 2;
    s.height = 16;
    s.width = 16;
    s.stem_channels = 2;
    s.block_channels.assign(static_cast<std::size_t>(taps), 2);
    return s;
}

Clip random_clip(const NetworkSpec& s, Modality m, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Clip c;
    c.frames = Tensor4<float>(s.input_dims());
    for (std::size_t i = 0; i < c.frames.size(); ++i) c.frames[i] = u(rng);
    c.modality = m;
    return c;
}

Tensor4<double> tap(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor4<double>(Dims4{1, 1, 1, n}, std::move(v));
}

} // namespace

TEST(NetworkSpec, TapDimsMatchForwardPassForEveryDepth) {
    for (int j = 1; j <= 3; ++j) {
        NetworkSpec s;
        s.block_channels.assign(static_cast<std::size_t>(j), 4);
        const auto dims = s.tap_dims();
        ASSERT_EQ(static_cast<int>(dims.size()), j);
        const auto rgb = init_stream<float>(s, false, 1);
        const auto fish = init_stream<float>(s, true, 1);
        const auto r = rgb_forward(random_clip(s, Modality::flat, 1), rgb, s);
        const auto f = fisheye_forward(random_clip(s, Modality::fisheye, 2), fish, s, Ablation::full);
        ASSERT_EQ(r.taps.size(), dims.size());
        ASSERT_EQ(f.taps.size(), dims.size());
        for (int i = 0; i < j; ++i) {
            EXPECT_EQ(r.taps[i].dims(), dims[i]) << "J=" << j << " tap " << i;
            EXPECT_EQ(f.taps[i].dims(), dims[i]) << "J=" << j << " tap " << i;
        }
    }
}

TEST(NetworkSpec, ValidationRejectsDegenerateShapes) {
    NetworkSpec s;
    s.classes = 1;
    EXPECT_THROW(s.validate(), ConfigError);
    s = NetworkSpec{};
    s.block_channels.clear();
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Stream, ZeroWeightsGiveUniformLogits) {
    const auto s = small_spec(2);
    auto w = init_stream<double>(s, false, 3);
    for (auto& p : w.store) std::fill(p.value.begin(), p.value.end(), 0.0);
    const auto out = rgb_forward(random_clip(s, Modality::flat, 4), w, s);
    for (double z : out.logits) EXPECT_EQ(z, 0.0);
}

TEST(Stream, InputGainScalesZeroBiasLogitsLinearly) {
    // With zero biases every layer is positively homogeneous, so a gain of 2
    // on the pixels doubles the logits.
    auto one = small_spec(2);
    one.input_gain = 1.0;
    auto two = one;
    two.input_gain = 2.0;
    auto w = init_stream<double>(one, false, 3);
    for (std::size_t idx : w.block_b) std::fill(w.store[idx].value.begin(), w.store[idx].value.end(), 0.0);
    for (std::size_t idx : {w.stem_b, w.head_b}) std::fill(w.store[idx].value.begin(), w.store[idx].value.end(), 0.0);
    const auto clip = random_clip(one, Modality::flat, 4);
    const auto a = rgb_forward(clip, w, one);
    const auto b = rgb_forward(clip, w, two);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(b.logits[k], 2.0 * a.logits[k], 1e-12);
    two.input_gain = 0.0;
    EXPECT_THROW(two.validate(), ConfigError);
}

TEST(Stream, FreshGtModulesLeaveTapsUnchanged) {
    const auto s = small_spec(2);
    const auto plain = init_stream<double>(s, false, 5);
    const auto full = init_stream<double>(s, true, 5);
    const auto clip = random_clip(s, Modality::fisheye, 6);
    const auto a = fisheye_forward(clip, plain, s, Ablation::plain);
    const auto b = fisheye_forward(clip, full, s, Ablation::full);
    for (int j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < a.taps[j].size(); ++i) EXPECT_NEAR(a.taps[j][i], b.taps[j][i], 1e-6);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.logits[k], b.logits[k], 1e-6);
}

TEST(Stream, ModalityAndGtPresenceAreChecked) {
    const auto s = small_spec(1);
    const auto plain = init_stream<float>(s, false, 1);
    const auto full = init_stream<float>(s, true, 1);
    EXPECT_THROW(rgb_forward(random_clip(s, Modality::fisheye, 1), plain, s), InputError);
    EXPECT_THROW(rgb_forward(random_clip(s, Modality::flat, 1), full, s), ConfigError);
    EXPECT_THROW(fisheye_forward(random_clip(s, Modality::fisheye, 1), plain, s, Ablation::full), ConfigError);
    EXPECT_THROW(fisheye_forward(random_clip(s, Modality::fisheye, 1), full, s, Ablation::plain), ConfigError);
}

TEST(GuidedLoss, HandComputedTwoTaps) {
    // Tap 1: p = (1/4, 3/4), q = (1/2, 1/2). Tap 2: identical distributions.
    const std::vector<Tensor4<double>> rgb{tap({0.0, std::log(3.0)}), tap({1.0, 2.0})};
    const std::vector<Tensor4<double>> fish{tap({5.0, 5.0}), tap({1.0, 2.0})};
    const std::vector<double> logits{0.0, 0.0};
    const std::vector<unsigned char> all{1, 1};
    const auto r = guided_loss<double>(rgb, fish, logits, 0, all);
    const double kl1 = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
    EXPECT_NEAR(r.per_module[0], kl1, 1e-12);
    EXPECT_NEAR(r.per_module[1], 0.0, 1e-15);
    EXPECT_NEAR(r.guidance, kl1, 1e-12);
    EXPECT_NEAR(r.classification, std::log(2.0), 1e-15);
    EXPECT_EQ(r.total, r.guidance + r.classification);

    const std::vector<unsigned char> last{0, 1};
    const auto g = guided_loss<double>(rgb, fish, logits, 0, last);
    EXPECT_EQ(g.guidance, 0.0);
    EXPECT_EQ(g.per_module[0], 0.0);
}

TEST(GuidedLoss, ShapeMismatchIsContractViolation) {
    const std::vector<Tensor4<double>> rgb{tap({0.0, 1.0})};
    const std::vector<Tensor4<double>> fish{tap({0.0, 1.0, 2.0})};
    const std::vector<double> logits{0.0, 0.0};
    const std::vector<unsigned char> on{1};
    EXPECT_THROW(guided_loss<double>(rgb, fish, logits, 0, on), ContractViolation);
    const std::vector<unsigned char> two{1, 1};
    EXPECT_THROW(guided_loss<double>(rgb, rgb, logits, 0, two), ContractViolation);
}

TEST(GuidedLoss, PlainAblationHasNoGuidanceTerm) {
    const std::vector<Tensor4<double>> none;
    const std::vector<double> logits{0.3, -0.2, 0.1};
    const auto active = guidance_taps(Ablation::plain, 3);
    const auto r = guided_loss<double>(none, none, logits, 2, active);
    EXPECT_EQ(r.guidance, 0.0);
    EXPECT_EQ(r.total, r.classification);
}

TEST(GuidedLoss, ActiveTapsPerAblation) {
    EXPECT_EQ(guidance_taps(Ablation::full, 3), (std::vector<unsigned char>{1, 1, 1}));
    EXPECT_EQ(guidance_taps(Ablation::guidance_only, 3), (std::vector<unsigned char>{0, 0, 1}));
    EXPECT_EQ(guidance_taps(Ablation::transformer_only, 3), (std::vector<unsigned char>{0, 0, 0}));
    EXPECT_EQ(guidance_taps(Ablation::plain, 2), (std::vector<unsigned char>{0, 0}));
    EXPECT_TRUE(uses_gt(Ablation::full));
    EXPECT_TRUE(uses_gt(Ablation::transformer_only));
    EXPECT_FALSE(uses_gt(Ablation::guidance_only));
    EXPECT_TRUE(uses_guidance(Ablation::guidance_only));
    EXPECT_FALSE(uses_guidance(Ablation::transformer_only));
}

TEST(Ablation, ParsesShortAndLongTags) {
    EXPECT_EQ(parse_ablation("guidance"), Ablation::guidance_only);
    EXPECT_EQ(parse_ablation("transformer_only"), Ablation::transformer_only);
    EXPECT_EQ(parse_ablation(to_string(Ablation::full)), Ablation::full);
    EXPECT_THROW(parse_ablation("both"), ConfigError);
}

TEST(Argmax, LowestIndexWinsTies) {
    const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
    EXPECT_EQ(argmax<double>(v), 1);
    const std::vector<double> flat(4, 0.0);
    EXPECT_EQ(argmax<double>(flat), 0);
}

TEST(Stream, BackwardMatchesFiniteDifferences) {
    // Whole-network check on the parameters downstream of the last block:
    // guidance on the last tap plus cross entropy, guidance_only ablation.
    const auto s = small_spec(2);
    auto w = init_stream<double>(s, false, 7);
    const auto rgb = init_stream<double>(s, false, 8);
    const auto clip = random_clip(s, Modality::fisheye, 9);
    const auto input = clip.frames.cast<double>();
    const auto rgb_taps = stream_forward(rgb, random_clip(s, Modality::flat, 10).frames.cast<double>(), false).taps;
    const auto active = guidance_taps(Ablation::guidance_only, 2);
    const int label = 1;

    auto loss = [&](const StreamWeights<double>& sw) {
        const auto tr = stream_forward(sw, input, false);
        return guided_loss<double>(rgb_taps, tr.taps, tr.logits, label, active).total;
    };
    const auto tr = stream_forward(w, input, false);
    LossGrads<double> grads;
    guided_loss<double>(rgb_taps, tr.taps, tr.logits, label, active, &grads);
    w.store.zero_grad();
    stream_backward<double>(tr, w, grads.logits, &grads.taps);

    for (std::size_t idx : {w.head_w, w.head_b, w.block_b.back(), w.block_w.back()}) {
        const std::vector<double> x0 = w.store[idx].value;
        const std::vector<double> analytic = w.store[idx].grad;
        auto f = [&](std::span<const double> x) {
            std::copy(x.begin(), x.end(), w.store[idx].value.begin());
            const double v = loss(w);
            std::copy(x0.begin(), x0.end(), w.store[idx].value.begin());
            return v;
        };
        const auto r = diff::grad_check(f, x0, analytic);
        EXPECT_LE(r.max_relative_error, 1e-4) << w.store[idx].name;
    }
}

TEST(Stream, BindRebuildsFromStoreByName) {
    const auto s = small_spec(2);
    const auto w = init_stream<double>(s, true, 3);
    const auto b = bind_stream<double>(s, true, w.store);
    const auto clip = random_clip(s, Modality::fisheye, 4);
    EXPECT_EQ(fisheye_forward(clip, w, s, Ablation::full).logits, fisheye_forward(clip, b, s, Ablation::full).logits);
    EXPECT_THROW(bind_stream<double>(s, false, w.store), ConfigError);
}

TEST(Stream, InitDependsOnlyOnSpecAndSeed) {
    const auto s = small_spec(2);
    const auto a = init_stream<float>(s, false, 42);
    const auto b = init_stream<float>(s, true, 42);
    for (const auto& p : a.store) EXPECT_EQ(p.value, b.store[b.store.find(p.name)].value) << p.name;
}
