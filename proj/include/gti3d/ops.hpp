#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gti3d/tensor.hpp"

// Forward and analytic backward kernels for the two streams. Every backward
// function *accumulates* into its output cotangents so that a batch can share
// one set of gradient buffers.
namespace gti3d::diff {

// Geometry of a 3D cross-correlation. Weights are laid out
// C_out x C_in x kD x kH x kW, row-major.
struct Conv3dShape {
    int c_out = 1;
    int c_in = 1;
    std::array<int, 3> kernel{1, 1, 1};  // (D, H, W)
    std::array<int, 3> stride{1, 1, 1};
    std::array<int, 3> pad{0, 0, 0};

    std::size_t weight_count() const {
        return static_cast<std::size_t>(c_out) * c_in * kernel[0] * kernel[1] * kernel[2];
    }
    std::vector<int> weight_shape() const {
        return {c_out, c_in, kernel[0], kernel[1], kernel[2]};
    }
    // Throws ConfigError when the input is incompatible with this geometry.
    Dims4 output_dims(const Dims4& in) const;
};

template <typename T>
Tensor4<T> conv3d(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias,
                  const Conv3dShape& shape);

// grad_x may be null when the input cotangent is not needed (network stem).
template <typename T>
void conv3d_backward(const Tensor4<T>& x, std::span<const T> weight, const Conv3dShape& shape,
                     const Tensor4<T>& grad_y, Tensor4<T>* grad_x, std::span<T> grad_weight,
                     std::span<T> grad_bias);

struct PoolShape {
    std::array<int, 3> window{1, 2, 2};
    std::array<int, 3> stride{1, 2, 2};

    Dims4 output_dims(const Dims4& in) const;
};

template <typename T>
struct MaxPoolResult {
    Tensor4<T> y;
    std::vector<std::uint32_t> argmax;  // flat input index per output cell
};

// Ties resolve to the first cell in (d, h, w) scan order.
template <typename T>
MaxPoolResult<T> maxpool3d(const Tensor4<T>& x, const PoolShape& shape);

template <typename T>
void maxpool3d_backward(std::span<const std::uint32_t> argmax, const Tensor4<T>& grad_y,
                        Tensor4<T>& grad_x);

// y = W x + b with W stored out x in.
template <typename T>
std::vector<T> dense(std::span<const T> x, std::span<const T> weight, std::span<const T> bias,
                     int out_features);

template <typename T>
void dense_backward(std::span<const T> x, std::span<const T> weight, std::span<const T> grad_y,
                    std::span<T> grad_x, std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x);

// Subgradient 0 at x == 0.
template <typename T>
void relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_y, Tensor4<T>& grad_x);

// Softmax over H x W for every (frame, channel) slice, max-subtracted.
template <typename T>
Tensor4<T> spatial_softmax(const Tensor4<T>& x);

template <typename T>
void spatial_softmax_backward(const Tensor4<T>& y, const Tensor4<T>& grad_y, Tensor4<T>& grad_x);

inline constexpr double kKlFloor = 1e-8;
inline constexpr double kKlNormTolerance = 1e-4;

// Mean over (frame, channel) slices of sum p (log p - log q), both floored at
// kKlFloor. Each slice of p and q must sum to 1 within kKlNormTolerance,
// otherwise ContractViolation.
template <typename T>
T kl_divergence(const Tensor4<T>& p_ref, const Tensor4<T>& q);

// Cotangent w.r.t. q only, scaled by `scale`. The reference p is frozen.
template <typename T>
void kl_divergence_backward(const Tensor4<T>& p_ref, const Tensor4<T>& q, T scale,
                            Tensor4<T>& grad_q);

// -log softmax(logits)[label]. label outside [0, K) is an InputError.
template <typename T>
T cross_entropy(std::span<const T> logits, int label);

// softmax(logits) - one_hot(label), scaled.
template <typename T>
void cross_entropy_backward(std::span<const T> logits, int label, T scale, std::span<T> grad_logits);

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

// Mean over (D, H, W): returns one value per channel.
template <typename T>
std::vector<T> global_avg_pool(const Tensor4<T>& x);

template <typename T>
void global_avg_pool_backward(std::span<const T> grad_y, Tensor4<T>& grad_x);

// Mean over (H, W) per frame: returns D x C row-major.
template <typename T>
std::vector<T> spatial_avg_pool(const Tensor4<T>& x);

template <typename T>
void spatial_avg_pool_backward(std::span<const T> grad_y, Tensor4<T>& grad_x);

} // namespace gti3d::diff
