#include "gti3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <random>

#include "gti3d/errors.hpp"

namespace gti3d::train {

TrainConfig TrainConfig::full_scale() {
    TrainConfig c;
    c.iterations = 30000;
    c.batch = 16;
    c.learning_rate = 4e-3;
    c.frames = 64;
    return c;
}

void TrainConfig::validate() const {
    if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning rate must be > 0");
    if (frames < 1) throw ConfigError("train: frames must be >= 1");
    if (!(gt_lr_scale > 0.0) || !std::isfinite(gt_lr_scale)) throw ConfigError("train: gt_lr_scale must be > 0");
}

const char* to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "cosine"; }

LrSchedule parse_lr_schedule(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "cosine") return LrSchedule::cosine;
    throw ConfigError("train: unknown lr schedule '" + s + "' (constant, cosine)");
}

double TrainConfig::learning_rate_at(int iteration) const {
    if (schedule == LrSchedule::constant) return learning_rate;
    return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * iteration / iterations));
}

std::vector<int> uniform_frame_indices(int length, int n, double phase) {
    if (n < 1 || length < n)
        throw InputError("cannot sample " + std::to_string(n) + " frames from a clip of " + std::to_string(length));
    if (!(phase >= 0.0 && phase < 1.0)) throw ConfigError("frame sampling phase must lie in [0, 1)");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i)
        idx[i] = std::min(length - 1, static_cast<int>(std::floor((i + phase) * length / n)));
    return idx;
}

Clip sample_frames(const Clip& clip, int n, double phase) {
    const Dims4& d = clip.frames.dims();
    if (d.d == n) return clip;
    const auto idx = uniform_frame_indices(d.d, n, phase);
    Clip out = clip;
    out.frames = Tensor4<float>(Dims4{n, d.c, d.h, d.w});
    const std::size_t per_frame = static_cast<std::size_t>(d.c) * d.plane();
    for (int i = 0; i < n; ++i)
        std::copy_n(clip.frames.data() + idx[i] * per_frame, per_frame, out.frames.data() + i * per_frame);
    return out;
}

void check_pairs(const std::vector<PairedClip>& pairs) {
    for (const auto& p : pairs) {
        const bool ok = p.flat.modality == Modality::flat && p.fisheye.modality == Modality::fisheye &&
                        p.flat.instance_id == p.fisheye.instance_id && p.flat.label == p.fisheye.label &&
                        p.flat.subject_id == p.fisheye.subject_id;
        if (!ok)
            throw InputError("train_fisheye: sample " + std::to_string(p.fisheye.instance_id) +
                             " is not a matched flat/fisheye pair (flat instance " +
                             std::to_string(p.flat.instance_id) + ")");
    }
}

namespace {

// Epoch-wise shuffled sample order.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed ^ 0xA5A5A5A55A5A5A5Aull) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
    }

    std::size_t next() {
        if (pos_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

    double phase(bool random) {
        if (!random) return 0.5;
        return std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::mt19937_64 rng_;
};

void accumulate(CurveRow& row, const model::LossReport& r, double scale) {
    row.guidance += scale * r.guidance;
    row.classification += scale * r.classification;
    if (row.per_module.size() < r.per_module.size()) row.per_module.resize(r.per_module.size(), 0.0);
    for (std::size_t j = 0; j < r.per_module.size(); ++j) row.per_module[j] += scale * r.per_module[j];
}

void finish(CurveRow& row) {
    // Reported so that total == guidance + classification exactly.
    row.total = row.guidance + row.classification;
}

} // namespace

template <typename T>
RgbResult<T> pretrain_rgb(const std::vector<Clip>& train, const std::vector<Clip>& test, const model::NetworkSpec& spec,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw InputError("pretrain_rgb: empty training set");
    RgbResult<T> res{model::init_stream<T>(spec, false, cfg.seed), {}, 0.0, 0.0};
    auto& w = res.weights;
    BatchSampler sampler(train.size(), cfg.seed);
    const T scale = T(1);  // batch-summed objective
    const std::vector<unsigned char> none(static_cast<std::size_t>(spec.taps()), 0);
    for (int it = 0; it < cfg.iterations; ++it) {
        CurveRow row;
        row.iteration = it + 1;
        for (int b = 0; b < cfg.batch; ++b) {
            const Clip clip = sample_frames(train[sampler.next()], cfg.frames, sampler.phase(cfg.random_phase));
            const auto trace =
                model::stream_forward(w, model::network_input<T>(clip, Modality::flat, spec, "pretrain_rgb"), false);
            model::LossGrads<T> grads;
            const auto report = model::guided_loss<T>({}, {}, trace.logits, clip.label, none, &grads, scale);
            model::stream_backward<T>(trace, w, grads.logits, nullptr);
            accumulate(row, report, 1.0 / cfg.batch);
        }
        diff::sgd_step(w.store, static_cast<T>(cfg.learning_rate_at(it)));
        finish(row);
        res.curve.push_back(std::move(row));
    }
    res.train_accuracy = rgb_accuracy(train, w, spec, cfg.frames);
    res.test_accuracy = test.empty() ? 0.0 : rgb_accuracy(test, w, spec, cfg.frames);
    return res;
}

template <typename T>
FisheyeResult<T> train_fisheye(const std::vector<PairedClip>& train, const model::StreamWeights<T>* rgb,
                               const model::NetworkSpec& spec, const TrainConfig& cfg, model::Ablation ablation) {
    cfg.validate();
    if (train.empty()) throw InputError("train_fisheye: empty training set");
    check_pairs(train);
    const bool guided = model::uses_guidance(ablation);
    if (guided && !rgb) throw ConfigError("train_fisheye: ablation " + std::string(model::to_string(ablation)) +
                                          " needs a pre-trained RGB stream");
    if (guided && rgb->has_gt) throw ConfigError("train_fisheye: RGB stream must not carry GT-Modules");

    FisheyeResult<T> res{model::init_stream<T>(spec, model::uses_gt(ablation), cfg.seed), {}};
    auto& w = res.weights;
    const auto active = model::guidance_taps(ablation, spec.taps());
    BatchSampler sampler(train.size(), cfg.seed);
    const T scale = T(1);  // batch-summed objective

    // The RGB stream is frozen, so with fixed-phase sampling its taps are a
    // pure function of the clip and can be computed once.
    std::vector<std::vector<Tensor4<T>>> rgb_cache(guided && !cfg.random_phase ? train.size() : 0);

    for (int it = 0; it < cfg.iterations; ++it) {
        CurveRow row;
        row.iteration = it + 1;
        row.per_module.assign(static_cast<std::size_t>(spec.taps()), 0.0);
        for (int b = 0; b < cfg.batch; ++b) {
            const std::size_t i = sampler.next();
            const double phase = sampler.phase(cfg.random_phase);
            const Clip fish = sample_frames(train[i].fisheye, cfg.frames, phase);
            std::vector<Tensor4<T>> rgb_taps;
            if (guided) {
                if (!rgb_cache.empty() && !rgb_cache[i].empty()) {
                    rgb_taps = rgb_cache[i];
                } else {
                    rgb_taps = model::rgb_forward(sample_frames(train[i].flat, cfg.frames, phase), *rgb, spec).taps;
                    if (!rgb_cache.empty()) rgb_cache[i] = rgb_taps;
                }
            }
            const auto trace = model::stream_forward(
                w, model::network_input<T>(fish, Modality::fisheye, spec, "train_fisheye"), model::uses_gt(ablation));
            model::LossGrads<T> grads;
            const auto report = model::guided_loss<T>(rgb_taps, trace.taps, trace.logits, fish.label, active, &grads, scale);
            model::stream_backward<T>(trace, w, grads.logits, guided ? &grads.taps : nullptr);
            accumulate(row, report, 1.0 / cfg.batch);
        }
        if (w.has_gt && cfg.gt_lr_scale != 1.0)
            for (auto& p : w.store)
                if (p.name.starts_with("gt"))
                    for (auto& g : p.grad) g *= static_cast<T>(cfg.gt_lr_scale);
        diff::sgd_step(w.store, static_cast<T>(cfg.learning_rate_at(it)));
        finish(row);
        res.curve.push_back(std::move(row));
    }
    return res;
}

template <typename T>
double rgb_accuracy(const std::vector<Clip>& clips, const model::StreamWeights<T>& w, const model::NetworkSpec& spec,
                    int frames) {
    if (clips.empty()) throw InputError("accuracy: empty split");
    std::size_t correct = 0;
    for (const auto& c : clips) {
        const auto out = model::rgb_forward(sample_frames(c, frames), w, spec);
        if (model::argmax<T>(out.logits) == c.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(clips.size());
}

template <typename T>
double fisheye_accuracy(const std::vector<Clip>& clips, const model::StreamWeights<T>& w,
                        const model::NetworkSpec& spec, int frames) {
    if (clips.empty()) throw InputError("accuracy: empty split");
    std::size_t correct = 0;
    for (const auto& c : clips)
        if (model::infer(sample_frames(c, frames), w, spec) == c.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(clips.size());
}

#define GTI3D_INSTANTIATE_TRAIN(T)                                                                                  \
    template RgbResult<T> pretrain_rgb<T>(const std::vector<Clip>&, const std::vector<Clip>&,                       \
                                          const model::NetworkSpec&, const TrainConfig&);                           \
    template FisheyeResult<T> train_fisheye<T>(const std::vector<PairedClip>&, const model::StreamWeights<T>*,      \
                                               const model::NetworkSpec&, const TrainConfig&, model::Ablation);     \
    template double rgb_accuracy<T>(const std::vector<Clip>&, const model::StreamWeights<T>&,                       \
                                    const model::NetworkSpec&, int);                                                \
    template double fisheye_accuracy<T>(const std::vector<Clip>&, const model::StreamWeights<T>&,                   \
                                        const model::NetworkSpec&, int);

GTI3D_INSTANTIATE_TRAIN(float)
GTI3D_INSTANTIATE_TRAIN(double)

#undef GTI3D_INSTANTIATE_TRAIN

} // namespace gti3d::train
