#include "gti3d/model.hpp"

#include <cmath>
#include <random>

#include "gti3d/errors.hpp"

namespace gti3d {

const char* to_string(Modality m) {
    return m == Modality::flat ? "flat" : "fisheye";
}

Modality parse_modality(const std::string& s) {
    if (s == "flat") return Modality::flat;
    if (s == "fisheye") return Modality::fisheye;
    throw CorruptData("unknown modality '" + s + "'");
}

namespace model {

const char* to_string(Ablation a) {
    switch (a) {
    case Ablation::plain: return "plain";
    case Ablation::guidance_only: return "guidance";
    case Ablation::transformer_only: return "transformer";
    case Ablation::full: return "full";
    }
    return "?";
}

Ablation parse_ablation(const std::string& s) {
    if (s == "plain") return Ablation::plain;
    if (s == "guidance" || s == "guidance_only") return Ablation::guidance_only;
    if (s == "transformer" || s == "transformer_only") return Ablation::transformer_only;
    if (s == "full") return Ablation::full;
    throw ConfigError("unknown ablation '" + s + "' (expected plain, guidance, transformer or full)");
}

bool uses_gt(Ablation a) {
    return a == Ablation::transformer_only || a == Ablation::full;
}

bool uses_guidance(Ablation a) {
    return a == Ablation::guidance_only || a == Ablation::full;
}

namespace {

diff::Conv3dShape stem_shape(const NetworkSpec& s) {
    return {s.stem_channels, s.channels, {3, 3, 3}, {1, s.stem_stride, s.stem_stride}, {1, 1, 1}};
}

diff::Conv3dShape block_shape(int c_in, int c_out) {
    return {c_out, c_in, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
}

template <typename T>
void he_normal(std::vector<T>& v, double fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (T& x : v) x = static_cast<T>(dist(rng));
}

} // namespace

void NetworkSpec::validate() const {
    if (classes < 2) throw ConfigError("network: need at least 2 classes, got " + std::to_string(classes));
    if (block_channels.empty()) throw ConfigError("network: need at least one block (J >= 1)");
    if (frames < 1 || channels < 1 || height < 2 || width < 2) throw ConfigError("network: invalid input dims");
    if (stem_channels < 1 || stem_stride < 1 || loc_hidden < 1) throw ConfigError("network: invalid stem/locnet sizes");
    if (!(input_gain > 0.0) || !std::isfinite(input_gain)) throw ConfigError("network: input_gain must be positive");
    for (int c : block_channels)
        if (c < 1) throw ConfigError("network: block channel counts must be >= 1");
    (void)tap_dims();
}

std::vector<Dims4> NetworkSpec::tap_dims() const {
    Dims4 d = stem_shape(*this).output_dims(input_dims());
    std::vector<Dims4> taps;
    int c_in = stem_channels;
    for (int c : block_channels) {
        d = block_shape(c_in, c).output_dims(d);
        taps.push_back(d);
        d = kBlockPool.output_dims(d);
        c_in = c;
    }
    return taps;
}

template <typename T>
StreamWeights<T> init_stream(const NetworkSpec& spec, bool with_gt, std::uint64_t seed) {
    spec.validate();
    StreamWeights<T> w;
    w.spec = spec;
    w.has_gt = with_gt;
    std::mt19937_64 rng(seed);
    std::mt19937_64 gt_rng(seed ^ 0x9E3779B97F4A7C15ull);

    w.stem = stem_shape(spec);
    w.stem_w = w.store.add("stem.w", w.stem.weight_shape());
    w.stem_b = w.store.add("stem.b", {spec.stem_channels});
    he_normal(w.store[w.stem_w].value, static_cast<double>(w.stem.weight_count()) / w.stem.c_out, rng);

    int c_in = spec.stem_channels;
    for (int j = 0; j < spec.taps(); ++j) {
        const int c = spec.block_channels[j];
        const std::string name = "block" + std::to_string(j + 1);
        w.blocks.push_back(block_shape(c_in, c));
        w.block_w.push_back(w.store.add(name + ".w", w.blocks.back().weight_shape()));
        w.block_b.push_back(w.store.add(name + ".b", {c}));
        he_normal(w.store[w.block_w.back()].value, static_cast<double>(w.blocks.back().weight_count()) / c, rng);
        c_in = c;
    }
    w.head_w = w.store.add("head.w", {spec.classes, c_in});
    w.head_b = w.store.add("head.b", {spec.classes});
    he_normal(w.store[w.head_w].value, static_cast<double>(c_in), rng);

    if (with_gt) {
        for (int j = 0; j < spec.taps(); ++j) {
            gt::LocNetConfig cfg{spec.block_channels[j], spec.loc_hidden, spec.loc_mode, spec.family};
            w.gt.push_back(gt::register_locnet(w.store, "gt" + std::to_string(j + 1), cfg, gt_rng));
        }
    }
    return w;
}

template <typename T>
StreamWeights<T> bind_stream(const NetworkSpec& spec, bool with_gt, diff::ParamStore<T> store) {
    StreamWeights<T> w = init_stream<T>(spec, with_gt, 0);
    if (store.size() != w.store.size())
        throw ConfigError("bind_stream: expected " + std::to_string(w.store.size()) + " parameters, got " +
                          std::to_string(store.size()));
    for (auto& p : w.store) {
        const auto& src = store[store.find(p.name)];
        if (src.shape != p.shape) throw ConfigError("bind_stream: shape mismatch for '" + p.name + "'");
        p.value = src.value;
    }
    return w;
}

template <typename T>
StreamTrace<T> stream_forward(const StreamWeights<T>& w, const Tensor4<T>& input, bool apply_gt) {
    if (apply_gt && !w.has_gt) throw ConfigError("stream_forward: weights carry no GT-Modules");
    const auto& s = w.store;
    StreamTrace<T> tr;
    tr.input = input;
    tr.stem_a = diff::conv3d(input, s.value(w.stem_w), s.value(w.stem_b), w.stem);
    tr.stem_r = diff::relu(tr.stem_a);
    Tensor4<T> h = tr.stem_r;
    const int taps = static_cast<int>(w.blocks.size());
    for (int j = 0; j < taps; ++j) {
        tr.block_in.push_back(std::move(h));
        tr.block_a.push_back(diff::conv3d(tr.block_in.back(), s.value(w.block_w[j]), s.value(w.block_b[j]), w.blocks[j]));
        tr.block_r.push_back(diff::relu(tr.block_a.back()));
        if (apply_gt) {
            tr.gt.emplace_back();
            tr.taps.push_back(gt::gt_forward(tr.block_r.back(), s, w.gt[j], &tr.gt.back()));
        } else {
            tr.taps.push_back(tr.block_r.back());
        }
        auto pooled = diff::maxpool3d(tr.taps.back(), kBlockPool);
        tr.pool_argmax.push_back(std::move(pooled.argmax));
        h = std::move(pooled.y);
    }
    tr.last = std::move(h);
    tr.pooled = diff::global_avg_pool(tr.last);
    tr.logits = diff::dense<T>(tr.pooled, s.value(w.head_w), s.value(w.head_b), w.spec.classes);
    return tr;
}

template <typename T>
void stream_backward(const StreamTrace<T>& tr, StreamWeights<T>& w, std::span<const T> grad_logits,
                     const std::vector<Tensor4<T>>* grad_taps) {
    auto& s = w.store;
    const int taps = static_cast<int>(w.blocks.size());
    if (grad_taps && static_cast<int>(grad_taps->size()) != taps)
        throw ContractViolation("stream_backward: expected one tap cotangent per block");
    const bool applied_gt = !tr.gt.empty();

    std::vector<T> grad_pooled(tr.pooled.size(), T(0));
    diff::dense_backward<T>(tr.pooled, s.value(w.head_w), grad_logits, grad_pooled, s.grad(w.head_w), s.grad(w.head_b));
    Tensor4<T> grad_h(tr.last.dims());
    diff::global_avg_pool_backward<T>(grad_pooled, grad_h);

    for (int j = taps - 1; j >= 0; --j) {
        Tensor4<T> grad_tap(tr.taps[j].dims());
        diff::maxpool3d_backward<T>(tr.pool_argmax[j], grad_h, grad_tap);
        if (grad_taps) {
            const auto& extra = (*grad_taps)[j];
            if (!extra.empty()) {
                if (extra.dims() != grad_tap.dims()) throw ContractViolation("stream_backward: tap cotangent dims");
                for (std::size_t i = 0; i < grad_tap.size(); ++i) grad_tap[i] += extra[i];
            }
        }
        Tensor4<T> grad_r(tr.block_r[j].dims());
        if (applied_gt) {
            gt::gt_backward(tr.gt[j], s, w.gt[j], grad_tap, grad_r);
        } else {
            grad_r = std::move(grad_tap);
        }
        Tensor4<T> grad_a(tr.block_a[j].dims());
        diff::relu_backward(tr.block_a[j], grad_r, grad_a);
        Tensor4<T> grad_in(tr.block_in[j].dims());
        diff::conv3d_backward<T>(tr.block_in[j], s.value(w.block_w[j]), w.blocks[j], grad_a, &grad_in, s.grad(w.block_w[j]),
                              s.grad(w.block_b[j]));
        grad_h = std::move(grad_in);
    }
    Tensor4<T> grad_stem_a(tr.stem_a.dims());
    diff::relu_backward(tr.stem_a, grad_h, grad_stem_a);
    diff::conv3d_backward<T>(tr.input, s.value(w.stem_w), w.stem, grad_stem_a, nullptr, s.grad(w.stem_w),
                             s.grad(w.stem_b));
}

template <typename T>
Tensor4<T> network_input(const Clip& clip, Modality expected, const NetworkSpec& spec, const char* who) {
    if (clip.modality != expected)
        throw InputError(std::string(who) + ": clip " + std::to_string(clip.instance_id) + " is " +
                         gti3d::to_string(clip.modality) + ", expected " + gti3d::to_string(expected));
    if (clip.frames.dims() != spec.input_dims())
        throw InputError(std::string(who) + ": clip " + std::to_string(clip.instance_id) + " has dims " +
                         clip.frames.dims().str() + ", network expects " + spec.input_dims().str());
    auto x = clip.frames.cast<T>();
    const T gain = static_cast<T>(spec.input_gain);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= gain;
    return x;
}

template <typename T>
StreamOutput<T> rgb_forward(const Clip& flat, const StreamWeights<T>& w, const NetworkSpec& spec) {
    if (w.has_gt) throw ConfigError("rgb_forward: the RGB stream carries no GT-Modules");
    auto tr = stream_forward(w, network_input<T>(flat, Modality::flat, spec, "rgb_forward"), false);
    return {std::move(tr.logits), std::move(tr.taps)};
}

template <typename T>
StreamOutput<T> fisheye_forward(const Clip& fisheye, const StreamWeights<T>& w, const NetworkSpec& spec,
                                Ablation ablation) {
    if (uses_gt(ablation) != w.has_gt)
        throw ConfigError(std::string("fisheye_forward: weights ") + (w.has_gt ? "carry" : "lack") +
                          " GT-Modules but ablation is " + to_string(ablation));
    auto tr = stream_forward(w, network_input<T>(fisheye, Modality::fisheye, spec, "fisheye_forward"), uses_gt(ablation));
    return {std::move(tr.logits), std::move(tr.taps)};
}

std::vector<unsigned char> guidance_taps(Ablation a, int taps) {
    std::vector<unsigned char> active(static_cast<std::size_t>(taps), 0);
    if (a == Ablation::full) std::fill(active.begin(), active.end(), 1);
    if (a == Ablation::guidance_only && taps > 0) active.back() = 1;
    return active;
}

template <typename T>
LossReport guided_loss(const std::vector<Tensor4<T>>& rgb_taps, const std::vector<Tensor4<T>>& fisheye_taps,
                       std::span<const T> logits, int label, std::span<const unsigned char> active,
                       LossGrads<T>* grads, T scale) {
    const std::size_t taps = active.size();
    bool any = false;
    for (auto a : active) any = any || a;
    if (any && (rgb_taps.size() != taps || fisheye_taps.size() != taps))
        throw ContractViolation("guided_loss: tap lists must both have length J = " + std::to_string(taps));
    LossReport r;
    r.per_module.assign(taps, 0.0);
    if (grads) {
        grads->logits.assign(logits.size(), T(0));
        grads->taps.assign(taps, Tensor4<T>{});
    }
    for (std::size_t j = 0; j < taps; ++j) {
        if (!active[j]) continue;
        if (rgb_taps[j].dims() != fisheye_taps[j].dims())
            throw ContractViolation("guided_loss: tap " + std::to_string(j + 1) + " shapes differ: " +
                                    rgb_taps[j].dims().str() + " vs " + fisheye_taps[j].dims().str());
        const Tensor4<T> p = diff::spatial_softmax(rgb_taps[j]);
        const Tensor4<T> q = diff::spatial_softmax(fisheye_taps[j]);
        r.per_module[j] = static_cast<double>(diff::kl_divergence(p, q));
        r.guidance += r.per_module[j];
        if (grads) {
            Tensor4<T> grad_q(q.dims());
            diff::kl_divergence_backward(p, q, scale, grad_q);
            grads->taps[j] = Tensor4<T>(q.dims());
            diff::spatial_softmax_backward(q, grad_q, grads->taps[j]);
        }
    }
    r.classification = static_cast<double>(diff::cross_entropy(logits, label));
    r.total = r.guidance + r.classification;
    if (grads) diff::cross_entropy_backward(logits, label, scale, std::span<T>(grads->logits));
    return r;
}

template <typename T>
int argmax(std::span<const T> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

template <typename T>
int infer(const Clip& fisheye, const StreamWeights<T>& w, const NetworkSpec& spec) {
    auto tr = stream_forward(w, network_input<T>(fisheye, Modality::fisheye, spec, "infer"), w.has_gt);
    return argmax<T>(tr.logits);
}

#define GTI3D_INSTANTIATE_MODEL(T)                                                                                  \
    template struct StreamWeights<T>;                                                                               \
    template StreamWeights<T> init_stream<T>(const NetworkSpec&, bool, std::uint64_t);                              \
    template StreamWeights<T> bind_stream<T>(const NetworkSpec&, bool, diff::ParamStore<T>);                        \
    template Tensor4<T> network_input<T>(const Clip&, Modality, const NetworkSpec&, const char*);                \
    template StreamTrace<T> stream_forward(const StreamWeights<T>&, const Tensor4<T>&, bool);                       \
    template void stream_backward(const StreamTrace<T>&, StreamWeights<T>&, std::span<const T>,                     \
                                  const std::vector<Tensor4<T>>*);                                                  \
    template StreamOutput<T> rgb_forward(const Clip&, const StreamWeights<T>&, const NetworkSpec&);                 \
    template StreamOutput<T> fisheye_forward(const Clip&, const StreamWeights<T>&, const NetworkSpec&, Ablation);   \
    template LossReport guided_loss(const std::vector<Tensor4<T>>&, const std::vector<Tensor4<T>>&,                 \
                                    std::span<const T>, int, std::span<const unsigned char>, LossGrads<T>*, T);     \
    template int argmax(std::span<const T>);                                                                        \
    template int infer(const Clip&, const StreamWeights<T>&, const NetworkSpec&);

GTI3D_INSTANTIATE_MODEL(float)
GTI3D_INSTANTIATE_MODEL(double)

#undef GTI3D_INSTANTIATE_MODEL

} // namespace model
} // namespace gti3d
