#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "gti3d/ops.hpp"
#include "gti3d/param_store.hpp"
#include "gti3d/tensor.hpp"

// Guided transformer module: a 3D localization network regresses one
// unbounded parameter row per frame, a grid generator turns each row into a
// target->source sampling grid, and a bilinear sampler warps every channel of
// that frame with the same grid.
namespace gti3d::gt {

// affine      (xs, ys) = A (xt, yt) + b                          6 params
// projective  homogeneous 3x3 with last row (p7, p8, 1)          8 params
// radial      q = A (xt, yt) + b;  s = q (1 + k1 |q|^2 + k2 |q|^4)  8 params
enum class TransformFamily { affine, projective, radial };

const char* to_string(TransformFamily f);
TransformFamily parse_family(const std::string& s);
int param_count(TransformFamily f);
std::vector<double> identity_row(TransformFamily f);

inline constexpr double kProjectiveMinDenominator = 1e-6;

template <typename T>
struct TransformParams {
    TransformFamily family = TransformFamily::radial;
    int frames = 0;
    std::vector<T> values;  // frames x param_count(family); never squashed

    std::span<const T> row(int d) const {
        const std::size_t p = static_cast<std::size_t>(param_count(family));
        return std::span<const T>(values).subspan(static_cast<std::size_t>(d) * p, p);
    }
};

// Source coordinates in the normalized [-1, 1]^2 convention (x along width,
// align-corners), D x H x W x 2, plus a validity mask. Invalid cells sample 0.
template <typename T>
struct SampleGrid {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<T> coords;
    std::vector<unsigned char> valid;

    std::size_t cells() const { return static_cast<std::size_t>(frames) * height * width; }
};

// Regular target grid coordinate of column i out of n.
template <typename T>
T target_coord(int i, int n) {
    return n > 1 ? T(-1) + T(2) * static_cast<T>(i) / static_cast<T>(n - 1) : T(0);
}

template <typename T>
SampleGrid<T> generate_grid(const TransformParams<T>& params, int height, int width);

// Accumulates d(loss)/d(params) given d(loss)/d(coords).
template <typename T>
void generate_grid_backward(const TransformParams<T>& params, int height, int width,
                            std::span<const T> grad_coords, std::span<T> grad_params);

template <typename T>
Tensor4<T> sample(const Tensor4<T>& features, const SampleGrid<T>& grid);

// grad_features may be null; grad_coords may be empty.
template <typename T>
void sample_backward(const Tensor4<T>& features, const SampleGrid<T>& grid, const Tensor4<T>& grad_y,
                     Tensor4<T>* grad_features, std::span<T> grad_coords);

// per_frame: temporal kernel 1, so each parameter row depends only on its own frame.
// temporal:  temporal kernel 3 (the default 3D localization network).
// pooled:    temporal kernel 3 and features averaged over all frames, so every
//            frame receives the same row.
enum class LocNetMode { temporal, per_frame, pooled };

const char* to_string(LocNetMode m);
LocNetMode parse_locnet_mode(const std::string& s);

struct LocNetConfig {
    int in_channels = 1;
    int hidden = 4;
    LocNetMode mode = LocNetMode::temporal;
    TransformFamily family = TransformFamily::radial;
};

// Indices of the localization network's parameters inside a ParamStore.
struct LocNetWeights {
    LocNetConfig config;
    diff::Conv3dShape conv1;
    diff::Conv3dShape conv2;
    std::size_t conv1_w = 0, conv1_b = 0;
    std::size_t conv2_w = 0, conv2_b = 0;
    std::size_t fc_w = 0, fc_b = 0;
};

// Registers the localization network under `prefix`. Conv layers get He-normal
// weights from `rng`; the regression layer starts at zero weights with the
// identity row as bias, so a fresh module is the identity warp.
template <typename T>
LocNetWeights register_locnet(diff::ParamStore<T>& store, const std::string& prefix, const LocNetConfig& config,
                              std::mt19937_64& rng);

template <typename T>
struct GtTrace {
    Tensor4<T> input;
    Tensor4<T> a1, r1, a2, r2;
    std::vector<T> pooled;  // rows x hidden; rows is 1 in pooled mode, D otherwise
    TransformParams<T> params;
    SampleGrid<T> grid;
};

template <typename T>
TransformParams<T> localize(const Tensor4<T>& f_fisheye, const diff::ParamStore<T>& store, const LocNetWeights& w,
                            GtTrace<T>* trace = nullptr);

// Accumulates parameter gradients into `store` and the input cotangent into grad_input.
template <typename T>
void localize_backward(const GtTrace<T>& trace, diff::ParamStore<T>& store, const LocNetWeights& w,
                       std::span<const T> grad_params, Tensor4<T>& grad_input);

// localize -> generate_grid -> sample. Output dims equal input dims.
template <typename T>
Tensor4<T> gt_forward(const Tensor4<T>& f_fisheye, const diff::ParamStore<T>& store, const LocNetWeights& w,
                      GtTrace<T>* trace = nullptr);

template <typename T>
void gt_backward(const GtTrace<T>& trace, diff::ParamStore<T>& store, const LocNetWeights& w,
                 const Tensor4<T>& grad_transformed, Tensor4<T>& grad_input);

} // namespace gti3d::gt
