#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gti3d/clip.hpp"
#include "gti3d/gt_module.hpp"
#include "gti3d/ops.hpp"
#include "gti3d/param_store.hpp"

// Two-stream guided transformer I3D at desk scale. Both streams share one
// miniature I3D-style topology:
//
//   stem conv3d -> relu
//   J x [ conv3d 3x3x3 -> relu -> (GT-Module, fisheye stream) -> tap -> maxpool 1x2x2 ]
//   global average pool -> dense head (K logits)
//
// Taps are the pre-maxpool activations; on the fisheye stream they are the
// transformed features f^T, on the RGB stream the references f^R.
namespace gti3d::model {

enum class Ablation { plain, guidance_only, transformer_only, full };

const char* to_string(Ablation a);
// Accepts the short CLI tags (plain, guidance, transformer, full) and the long names.
Ablation parse_ablation(const std::string& s);
bool uses_gt(Ablation a);
bool uses_guidance(Ablation a);

struct NetworkSpec {
    int classes = 8;  // K
    int frames = 8;   // n
    int channels = 1;
    int height = 32;
    int width = 32;
    // Fixed multiplier on pixels before the stem. Clip pixels in [0, 1] have an
    // RMS near 0.2; the gain brings them to the unit scale He init assumes.
    double input_gain = 4.0;
    int stem_channels = 4;
    int stem_stride = 2;                    // spatial stride of the stem
    std::vector<int> block_channels{8, 8, 16};  // one entry per maxpool, so J = size()
    gt::TransformFamily family = gt::TransformFamily::radial;
    int loc_hidden = 4;
    gt::LocNetMode loc_mode = gt::LocNetMode::temporal;

    int taps() const { return static_cast<int>(block_channels.size()); }
    Dims4 input_dims() const { return {frames, channels, height, width}; }
    void validate() const;  // ConfigError
    // Dims of the J tap tensors, walked through the topology without running it.
    std::vector<Dims4> tap_dims() const;
};

// Parameters of one stream. The RGB stream carries no GT-Modules; a fisheye
// stream trained with an ablation that uses them carries exactly J.
template <typename T>
struct StreamWeights {
    NetworkSpec spec;
    bool has_gt = false;
    diff::ParamStore<T> store;

    diff::Conv3dShape stem;
    std::size_t stem_w = 0, stem_b = 0;
    std::vector<diff::Conv3dShape> blocks;
    std::vector<std::size_t> block_w, block_b;
    std::vector<gt::LocNetWeights> gt;
    std::size_t head_w = 0, head_b = 0;
};

// Backbone weights depend only on (spec, seed), so every ablation started from
// the same seed shares its backbone initialization.
template <typename T>
StreamWeights<T> init_stream(const NetworkSpec& spec, bool with_gt, std::uint64_t seed);

// Rebuilds the layer bookkeeping for `spec` and takes parameter values from
// `store` by name. Missing or mis-shaped entries are ConfigError.
template <typename T>
StreamWeights<T> bind_stream(const NetworkSpec& spec, bool with_gt, diff::ParamStore<T> store);

inline const diff::PoolShape kBlockPool{{1, 2, 2}, {1, 2, 2}};

template <typename T>
struct StreamTrace {
    Tensor4<T> input;
    Tensor4<T> stem_a, stem_r;
    std::vector<Tensor4<T>> block_in, block_a, block_r;
    std::vector<gt::GtTrace<T>> gt;
    std::vector<Tensor4<T>> taps;
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    Tensor4<T> last;
    std::vector<T> pooled;
    std::vector<T> logits;
};

// Checks modality and dims, casts to T and applies spec.input_gain. Every clip
// enters a stream through here.
template <typename T>
Tensor4<T> network_input(const Clip& clip, Modality expected, const NetworkSpec& spec, const char* who);

template <typename T>
StreamTrace<T> stream_forward(const StreamWeights<T>& w, const Tensor4<T>& input, bool apply_gt);

// Accumulates parameter gradients into w.store. grad_taps, when non-null,
// holds extra cotangents for the J taps (from the guidance loss).
template <typename T>
void stream_backward(const StreamTrace<T>& trace, StreamWeights<T>& w, std::span<const T> grad_logits,
                     const std::vector<Tensor4<T>>* grad_taps);

template <typename T>
struct StreamOutput {
    std::vector<T> logits;
    std::vector<Tensor4<T>> taps;
};

// Frozen flat stream. Input must be a flat clip matching spec.input_dims().
template <typename T>
StreamOutput<T> rgb_forward(const Clip& flat, const StreamWeights<T>& w, const NetworkSpec& spec);

// Fisheye stream under an ablation. GT-Modules run iff uses_gt(ablation); the
// weights must carry them in exactly that case.
template <typename T>
StreamOutput<T> fisheye_forward(const Clip& fisheye, const StreamWeights<T>& w, const NetworkSpec& spec,
                                Ablation ablation);

struct LossReport {
    double guidance = 0.0;        // L_G
    double classification = 0.0;  // L_C
    double total = 0.0;           // L = L_G + L_C
    std::vector<double> per_module;  // length J
};

template <typename T>
struct LossGrads {
    std::vector<T> logits;
    std::vector<Tensor4<T>> taps;
};

// Which taps the guidance term reads for an ablation: all J for full, the
// last one for guidance_only, none otherwise.
std::vector<unsigned char> guidance_taps(Ablation a, int taps);

// L_G = sum over active j of KL(softmax(f^R_j) || softmax(f^T_j)), L_C = cross
// entropy, L = L_G + L_C. When `grads` is non-null, cotangents scaled by
// `scale` are accumulated for the logits and the fisheye taps only.
template <typename T>
LossReport guided_loss(const std::vector<Tensor4<T>>& rgb_taps, const std::vector<Tensor4<T>>& fisheye_taps,
                       std::span<const T> logits, int label, std::span<const unsigned char> active,
                       LossGrads<T>* grads = nullptr, T scale = T(1));

// Argmax of the fisheye-stream logits, lowest index on ties. No RGB input.
template <typename T>
int infer(const Clip& fisheye, const StreamWeights<T>& w, const NetworkSpec& spec);

template <typename T>
int argmax(std::span<const T> v);

} // namespace gti3d::model
