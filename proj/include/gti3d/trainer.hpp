#pragma once

#include <cstdint>
#include <vector>

#include "gti3d/clip.hpp"
#include "gti3d/model.hpp"

namespace gti3d::train {

// constant keeps learning_rate throughout; cosine anneals it from
// learning_rate at the first iteration towards 0 at the last.
enum class LrSchedule { constant, cosine };
const char* to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& s);  // ConfigError

struct TrainConfig {
    int iterations = 1000;
    int batch = 8;
    double learning_rate = 4e-3;  // initial rate
    LrSchedule schedule = LrSchedule::cosine;
    int frames = 8;  // n, uniformly sampled from each clip
    bool random_phase = false;
    double gt_lr_scale = 0.01;  // multiplies the learning rate of GT-Module parameters
    std::uint64_t seed = 1;

    // Full-scale values: lr 4e-3, batch 16, n = 64, 30k iterations.
    static TrainConfig full_scale();
    void validate() const;  // ConfigError
    double learning_rate_at(int iteration) const;  // iteration in [0, iterations)
};

// Indices floor((i + phase) * length / n) for i in [0, n); phase in [0, 1).
std::vector<int> uniform_frame_indices(int length, int n, double phase);
Clip sample_frames(const Clip& clip, int n, double phase = 0.5);

struct CurveRow {
    int iteration = 0;
    double guidance = 0.0;
    double classification = 0.0;
    double total = 0.0;
    std::vector<double> per_module;
};

template <typename T>
struct RgbResult {
    model::StreamWeights<T> weights;
    std::vector<CurveRow> curve;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// Cross-entropy-only training of the flat stream. Throws InputError on an
// empty training set. Deterministic given cfg.seed.
template <typename T>
RgbResult<T> pretrain_rgb(const std::vector<Clip>& train, const std::vector<Clip>& test, const model::NetworkSpec& spec,
                          const TrainConfig& cfg);

struct PairedClip {
    Clip flat;
    Clip fisheye;
};

// InputError naming the offending instance when a pair is not the same
// (label, subject, instance) in flat + fisheye modality.
void check_pairs(const std::vector<PairedClip>& pairs);

template <typename T>
struct FisheyeResult {
    model::StreamWeights<T> weights;
    std::vector<CurveRow> curve;
};

// Optimizes the fisheye stream on L = L_G + L_C by plain SGD. `rgb` is read
// only and may be null for ablations without guidance.
template <typename T>
FisheyeResult<T> train_fisheye(const std::vector<PairedClip>& train, const model::StreamWeights<T>* rgb,
                               const model::NetworkSpec& spec, const TrainConfig& cfg, model::Ablation ablation);

template <typename T>
double rgb_accuracy(const std::vector<Clip>& clips, const model::StreamWeights<T>& w, const model::NetworkSpec& spec,
                    int frames);

template <typename T>
double fisheye_accuracy(const std::vector<Clip>& clips, const model::StreamWeights<T>& w,
                        const model::NetworkSpec& spec, int frames);

} // namespace gti3d::train
