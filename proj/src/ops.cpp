#include "gti3d/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gti3d/errors.hpp"

namespace gti3d {

std::string Dims4::str() const {
    std::ostringstream os;
    os << d << "x" << c << "x" << h << "x" << w;
    return os.str();
}

namespace diff {
namespace {

// Output positions o in [lo, hi] whose input coordinate o*s + k - p lies in [0, in).
struct Range {
    int lo;
    int hi;  // inclusive; empty when hi < lo
};

Range valid_range(int out, int in, int k, int s, int p) {
    int lo = 0;
    while (lo < out && lo * s + k - p < 0) ++lo;
    int hi = out - 1;
    while (hi >= lo && hi * s + k - p >= in) --hi;
    return {lo, hi};
}

int conv_out(int in, int k, int s, int p) {
    return (in + 2 * p - k) / s + 1;
}

} // namespace

Dims4 Conv3dShape::output_dims(const Dims4& in) const {
    if (in.c != c_in) {
        throw ConfigError("conv3d: input has " + std::to_string(in.c) + " channels, kernel expects " +
                          std::to_string(c_in));
    }
    const int ext[3] = {in.d, in.h, in.w};
    for (int a = 0; a < 3; ++a) {
        if (kernel[a] < 1 || stride[a] < 1 || pad[a] < 0)
            throw ConfigError("conv3d: kernel/stride must be >= 1 and padding >= 0");
        if (kernel[a] > ext[a] + 2 * pad[a])
            throw ConfigError("conv3d: kernel larger than padded input " + in.str());
    }
    return {conv_out(in.d, kernel[0], stride[0], pad[0]), c_out,
            conv_out(in.h, kernel[1], stride[1], pad[1]), conv_out(in.w, kernel[2], stride[2], pad[2])};
}

template <typename T>
Tensor4<T> conv3d(const Tensor4<T>& x, std::span<const T> weight, std::span<const T> bias,
                  const Conv3dShape& s) {
    const Dims4 od = s.output_dims(x.dims());
    if (weight.size() != s.weight_count()) throw ConfigError("conv3d: weight size mismatch");
    if (bias.size() != static_cast<std::size_t>(s.c_out)) throw ConfigError("conv3d: bias size mismatch");
    const Dims4& id = x.dims();
    const auto [kd, kh, kw] = s.kernel;
    const auto [sd, sh, sw] = s.stride;
    const auto [pd, ph, pw] = s.pad;

    Tensor4<T> y(od);
    for (int o = 0; o < od.d; ++o) {
        for (int co = 0; co < od.c; ++co) {
            T* yp = y.slice(o, co);
            std::fill(yp, yp + od.plane(), bias[co]);
            for (int ci = 0; ci < id.c; ++ci) {
                for (int a = 0; a < kd; ++a) {
                    const int in_d = o * sd + a - pd;
                    if (in_d < 0 || in_d >= id.d) continue;
                    const T* xp = x.slice(in_d, ci);
                    const T* wp = weight.data() + ((static_cast<std::size_t>(co) * s.c_in + ci) * kd + a) * kh * kw;
                    for (int b = 0; b < kh; ++b) {
                        const Range rh = valid_range(od.h, id.h, b, sh, ph);
                        for (int c = 0; c < kw; ++c) {
                            const T wv = wp[b * kw + c];
                            const Range rw = valid_range(od.w, id.w, c, sw, pw);
                            for (int oh = rh.lo; oh <= rh.hi; ++oh) {
                                const T* xr = xp + static_cast<std::size_t>(oh * sh + b - ph) * id.w;
                                T* yr = yp + static_cast<std::size_t>(oh) * od.w;
                                if (sw == 1) {
                                    const T* xs = xr + (c - pw);
                                    for (int ow = rw.lo; ow <= rw.hi; ++ow) yr[ow] += wv * xs[ow];
                                } else {
                                    for (int ow = rw.lo; ow <= rw.hi; ++ow) yr[ow] += wv * xr[ow * sw + c - pw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
void conv3d_backward(const Tensor4<T>& x, std::span<const T> weight, const Conv3dShape& s,
                     const Tensor4<T>& grad_y, Tensor4<T>* grad_x, std::span<T> grad_weight,
                     std::span<T> grad_bias) {
    const Dims4 od = s.output_dims(x.dims());
    if (grad_y.dims() != od) throw ConfigError("conv3d_backward: grad_y dims " + grad_y.dims().str());
    if (grad_x && grad_x->dims() != x.dims()) throw ConfigError("conv3d_backward: grad_x dims mismatch");
    if (grad_weight.size() != s.weight_count() || grad_bias.size() != static_cast<std::size_t>(s.c_out))
        throw ConfigError("conv3d_backward: gradient buffer size mismatch");
    const Dims4& id = x.dims();
    const auto [kd, kh, kw] = s.kernel;
    const auto [sd, sh, sw] = s.stride;
    const auto [pd, ph, pw] = s.pad;

    for (int o = 0; o < od.d; ++o) {
        for (int co = 0; co < od.c; ++co) {
            const T* gyp = grad_y.slice(o, co);
            T gb = T(0);
            for (std::size_t i = 0; i < od.plane(); ++i) gb += gyp[i];
            grad_bias[co] += gb;
            for (int ci = 0; ci < id.c; ++ci) {
                for (int a = 0; a < kd; ++a) {
                    const int in_d = o * sd + a - pd;
                    if (in_d < 0 || in_d >= id.d) continue;
                    const T* xp = x.slice(in_d, ci);
                    T* gxp = grad_x ? grad_x->slice(in_d, ci) : nullptr;
                    const std::size_t wbase = ((static_cast<std::size_t>(co) * s.c_in + ci) * kd + a) * kh * kw;
                    for (int b = 0; b < kh; ++b) {
                        const Range rh = valid_range(od.h, id.h, b, sh, ph);
                        for (int c = 0; c < kw; ++c) {
                            const T wv = weight[wbase + b * kw + c];
                            const Range rw = valid_range(od.w, id.w, c, sw, pw);
                            T gw = T(0);
                            for (int oh = rh.lo; oh <= rh.hi; ++oh) {
                                const std::size_t xrow = static_cast<std::size_t>(oh * sh + b - ph) * id.w;
                                const T* xr = xp + xrow;
                                const T* gyr = gyp + static_cast<std::size_t>(oh) * od.w;
                                for (int ow = rw.lo; ow <= rw.hi; ++ow) gw += gyr[ow] * xr[ow * sw + c - pw];
                                if (gxp) {
                                    T* gxr = gxp + xrow;
                                    for (int ow = rw.lo; ow <= rw.hi; ++ow) gxr[ow * sw + c - pw] += wv * gyr[ow];
                                }
                            }
                            grad_weight[wbase + b * kw + c] += gw;
                        }
                    }
                }
            }
        }
    }
}

Dims4 PoolShape::output_dims(const Dims4& in) const {
    const int ext[3] = {in.d, in.h, in.w};
    for (int a = 0; a < 3; ++a) {
        if (window[a] < 1 || stride[a] < 1) throw ConfigError("maxpool3d: window and stride must be >= 1");
        if (window[a] > ext[a]) throw ConfigError("maxpool3d: window larger than input " + in.str());
    }
    return {(in.d - window[0]) / stride[0] + 1, in.c, (in.h - window[1]) / stride[1] + 1,
            (in.w - window[2]) / stride[2] + 1};
}

template <typename T>
MaxPoolResult<T> maxpool3d(const Tensor4<T>& x, const PoolShape& s) {
    const Dims4 od = s.output_dims(x.dims());
    MaxPoolResult<T> r{Tensor4<T>(od), std::vector<std::uint32_t>(od.size())};
    std::size_t out = 0;
    for (int o = 0; o < od.d; ++o)
        for (int c = 0; c < od.c; ++c)
            for (int oh = 0; oh < od.h; ++oh)
                for (int ow = 0; ow < od.w; ++ow, ++out) {
                    std::size_t best_i = x.index(o * s.stride[0], c, oh * s.stride[1], ow * s.stride[2]);
                    T best = x[best_i];
                    for (int a = 0; a < s.window[0]; ++a)
                        for (int b = 0; b < s.window[1]; ++b)
                            for (int e = 0; e < s.window[2]; ++e) {
                                const std::size_t i = x.index(o * s.stride[0] + a, c, oh * s.stride[1] + b,
                                                              ow * s.stride[2] + e);
                                if (x[i] > best) {
                                    best = x[i];
                                    best_i = i;
                                }
                            }
                    r.y[out] = best;
                    r.argmax[out] = static_cast<std::uint32_t>(best_i);
                }
    return r;
}

template <typename T>
void maxpool3d_backward(std::span<const std::uint32_t> argmax, const Tensor4<T>& grad_y,
                        Tensor4<T>& grad_x) {
    if (argmax.size() != grad_y.size()) throw ConfigError("maxpool3d_backward: argmax size mismatch");
    for (std::size_t i = 0; i < argmax.size(); ++i) grad_x[argmax[i]] += grad_y[i];
}

template <typename T>
std::vector<T> dense(std::span<const T> x, std::span<const T> weight, std::span<const T> bias,
                     int out_features) {
    const std::size_t in = x.size();
    if (out_features < 1 || bias.size() != static_cast<std::size_t>(out_features) ||
        weight.size() != in * static_cast<std::size_t>(out_features))
        throw ConfigError("dense: shape mismatch");
    std::vector<T> y(bias.begin(), bias.end());
    for (int o = 0; o < out_features; ++o) {
        const T* wr = weight.data() + o * in;
        T acc = T(0);
        for (std::size_t i = 0; i < in; ++i) acc += wr[i] * x[i];
        y[o] += acc;
    }
    return y;
}

template <typename T>
void dense_backward(std::span<const T> x, std::span<const T> weight, std::span<const T> grad_y,
                    std::span<T> grad_x, std::span<T> grad_weight, std::span<T> grad_bias) {
    const std::size_t in = x.size();
    const std::size_t out = grad_y.size();
    if (weight.size() != in * out || grad_weight.size() != in * out || grad_bias.size() != out ||
        (!grad_x.empty() && grad_x.size() != in))
        throw ConfigError("dense_backward: shape mismatch");
    for (std::size_t o = 0; o < out; ++o) {
        const T g = grad_y[o];
        grad_bias[o] += g;
        T* gw = grad_weight.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) gw[i] += g * x[i];
        if (!grad_x.empty()) {
            const T* wr = weight.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) grad_x[i] += g * wr[i];
        }
    }
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> y(x.dims());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    return y;
}

template <typename T>
void relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_y, Tensor4<T>& grad_x) {
    if (x.dims() != grad_y.dims() || x.dims() != grad_x.dims()) throw ConfigError("relu_backward: dims mismatch");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > T(0)) grad_x[i] += grad_y[i];
}

template <typename T>
Tensor4<T> spatial_softmax(const Tensor4<T>& x) {
    const Dims4& d = x.dims();
    Tensor4<T> y(d);
    const std::size_t n = d.plane();
    for (int f = 0; f < d.d; ++f)
        for (int c = 0; c < d.c; ++c) {
            const T* xs = x.slice(f, c);
            T* ys = y.slice(f, c);
            const T mx = *std::max_element(xs, xs + n);
            T sum = T(0);
            for (std::size_t i = 0; i < n; ++i) {
                ys[i] = std::exp(xs[i] - mx);
                sum += ys[i];
            }
            for (std::size_t i = 0; i < n; ++i) ys[i] /= sum;
        }
    return y;
}

template <typename T>
void spatial_softmax_backward(const Tensor4<T>& y, const Tensor4<T>& grad_y, Tensor4<T>& grad_x) {
    const Dims4& d = y.dims();
    if (grad_y.dims() != d || grad_x.dims() != d) throw ConfigError("spatial_softmax_backward: dims mismatch");
    const std::size_t n = d.plane();
    for (int f = 0; f < d.d; ++f)
        for (int c = 0; c < d.c; ++c) {
            const T* ys = y.slice(f, c);
            const T* gs = grad_y.slice(f, c);
            T* gx = grad_x.slice(f, c);
            T dot = T(0);
            for (std::size_t i = 0; i < n; ++i) dot += ys[i] * gs[i];
            for (std::size_t i = 0; i < n; ++i) gx[i] += ys[i] * (gs[i] - dot);
        }
}

namespace {

template <typename T>
void require_distribution(const Tensor4<T>& t, const char* what) {
    const Dims4& d = t.dims();
    const std::size_t n = d.plane();
    for (int f = 0; f < d.d; ++f)
        for (int c = 0; c < d.c; ++c) {
            const T* s = t.slice(f, c);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!(s[i] >= T(0))) throw ContractViolation(std::string("kl_divergence: negative or NaN entry in ") + what);
                sum += s[i];
            }
            if (std::abs(sum - 1.0) > kKlNormTolerance) {
                std::ostringstream os;
                os << "kl_divergence: " << what << " slice (" << f << "," << c << ") sums to " << sum
                   << ", not a distribution";
                throw ContractViolation(os.str());
            }
        }
}

} // namespace

template <typename T>
T kl_divergence(const Tensor4<T>& p, const Tensor4<T>& q) {
    if (p.dims() != q.dims())
        throw ContractViolation("kl_divergence: shape mismatch " + p.dims().str() + " vs " + q.dims().str());
    require_distribution(p, "reference");
    require_distribution(q, "query");
    const T eps = static_cast<T>(kKlFloor);
    T total = T(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == T(0)) continue;
        total += p[i] * (std::log(std::max(p[i], eps)) - std::log(std::max(q[i], eps)));
    }
    const auto slices = static_cast<T>(p.dims().d * p.dims().c);
    return total / slices;
}

template <typename T>
void kl_divergence_backward(const Tensor4<T>& p, const Tensor4<T>& q, T scale, Tensor4<T>& grad_q) {
    if (p.dims() != q.dims() || grad_q.dims() != q.dims())
        throw ContractViolation("kl_divergence_backward: shape mismatch");
    const T eps = static_cast<T>(kKlFloor);
    const T k = scale / static_cast<T>(p.dims().d * p.dims().c);
    for (std::size_t i = 0; i < p.size(); ++i)
        if (q[i] > eps) grad_q[i] -= k * p[i] / q[i];
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    std::vector<T> p(logits.begin(), logits.end());
    const T mx = *std::max_element(p.begin(), p.end());
    T sum = T(0);
    for (T& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (T& v : p) v /= sum;
    return p;
}

template <typename T>
T cross_entropy(std::span<const T> logits, int label) {
    const int k = static_cast<int>(logits.size());
    if (k < 1) throw ConfigError("cross_entropy: empty logits");
    if (label < 0 || label >= k)
        throw InputError("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
    const T mx = *std::max_element(logits.begin(), logits.end());
    T sum = T(0);
    for (T v : logits) sum += std::exp(v - mx);
    return std::log(sum) + mx - logits[label];
}

template <typename T>
void cross_entropy_backward(std::span<const T> logits, int label, T scale, std::span<T> grad_logits) {
    const int k = static_cast<int>(logits.size());
    if (label < 0 || label >= k)
        throw InputError("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
    if (grad_logits.size() != logits.size()) throw ConfigError("cross_entropy_backward: size mismatch");
    const std::vector<T> p = softmax(logits);
    for (int i = 0; i < k; ++i) grad_logits[i] += scale * (p[i] - (i == label ? T(1) : T(0)));
}

template <typename T>
std::vector<T> global_avg_pool(const Tensor4<T>& x) {
    const Dims4& d = x.dims();
    std::vector<T> y(d.c, T(0));
    const std::size_t n = d.plane();
    for (int f = 0; f < d.d; ++f)
        for (int c = 0; c < d.c; ++c) {
            const T* s = x.slice(f, c);
            T acc = T(0);
            for (std::size_t i = 0; i < n; ++i) acc += s[i];
            y[c] += acc;
        }
    const T inv = T(1) / static_cast<T>(static_cast<std::size_t>(d.d) * n);
    for (T& v : y) v *= inv;
    return y;
}

template <typename T>
void global_avg_pool_backward(std::span<const T> grad_y, Tensor4<T>& grad_x) {
    const Dims4& d = grad_x.dims();
    if (grad_y.size() != static_cast<std::size_t>(d.c)) throw ConfigError("global_avg_pool_backward: size mismatch");
    const std::size_t n = d.plane();
    const T inv = T(1) / static_cast<T>(static_cast<std::size_t>(d.d) * n);
    for (int f = 0; f < d.d; ++f)
        for (int c = 0; c < d.c; ++c) {
            T* s = grad_x.slice(f, c);
            const T g = grad_y[c] * inv;
            for (std::size_t i = 0; i < n; ++i) s[i] += g;
        }
}

template <typename T>
std::vector<T> spatial_avg_pool(const Tensor4<T>& x) {
    const Dims4& d = x.dims();
    std::vector<T> y(static_cast<std::size_t>(d.d) * d.c);
    const std::size_t n = d.plane();
    const T inv = T(1) / static_cast<T>(n);
    for (int f = 0; f < d.d; ++f)
        for (int c = 0; c < d.c; ++c) {
            const T* s = x.slice(f, c);
            T acc = T(0);
            for (std::size_t i = 0; i < n; ++i) acc += s[i];
            y[static_cast<std::size_t>(f) * d.c + c] = acc * inv;
        }
    return y;
}

template <typename T>
void spatial_avg_pool_backward(std::span<const T> grad_y, Tensor4<T>& grad_x) {
    const Dims4& d = grad_x.dims();
    if (grad_y.size() != static_cast<std::size_t>(d.d) * d.c)
        throw ConfigError("spatial_avg_pool_backward: size mismatch");
    const std::size_t n = d.plane();
    const T inv = T(1) / static_cast<T>(n);
    for (int f = 0; f < d.d; ++f)
        for (int c = 0; c < d.c; ++c) {
            T* s = grad_x.slice(f, c);
            const T g = grad_y[static_cast<std::size_t>(f) * d.c + c] * inv;
            for (std::size_t i = 0; i < n; ++i) s[i] += g;
        }
}

#define GTI3D_INSTANTIATE_OPS(T)                                                                          \
    template Tensor4<T> conv3d(const Tensor4<T>&, std::span<const T>, std::span<const T>, const Conv3dShape&); \
    template void conv3d_backward(const Tensor4<T>&, std::span<const T>, const Conv3dShape&, const Tensor4<T>&, \
                                  Tensor4<T>*, std::span<T>, std::span<T>);                              \
    template MaxPoolResult<T> maxpool3d(const Tensor4<T>&, const PoolShape&);                            \
    template void maxpool3d_backward(std::span<const std::uint32_t>, const Tensor4<T>&, Tensor4<T>&);    \
    template std::vector<T> dense(std::span<const T>, std::span<const T>, std::span<const T>, int);      \
    template void dense_backward(std::span<const T>, std::span<const T>, std::span<const T>, std::span<T>, \
                                 std::span<T>, std::span<T>);                                            \
    template Tensor4<T> relu(const Tensor4<T>&);                                                         \
    template void relu_backward(const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>&);                      \
    template Tensor4<T> spatial_softmax(const Tensor4<T>&);                                              \
    template void spatial_softmax_backward(const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>&);           \
    template T kl_divergence(const Tensor4<T>&, const Tensor4<T>&);                                      \
    template void kl_divergence_backward(const Tensor4<T>&, const Tensor4<T>&, T, Tensor4<T>&);          \
    template std::vector<T> softmax(std::span<const T>);                                                 \
    template T cross_entropy(std::span<const T>, int);                                                   \
    template void cross_entropy_backward(std::span<const T>, int, T, std::span<T>);                      \
    template std::vector<T> global_avg_pool(const Tensor4<T>&);                                          \
    template void global_avg_pool_backward(std::span<const T>, Tensor4<T>&);                             \
    template std::vector<T> spatial_avg_pool(const Tensor4<T>&);                                         \
    template void spatial_avg_pool_backward(std::span<const T>, Tensor4<T>&);

GTI3D_INSTANTIATE_OPS(float)
GTI3D_INSTANTIATE_OPS(double)

#undef GTI3D_INSTANTIATE_OPS

} // namespace diff
} // namespace gti3d
