#include "gti3d/gt_module.hpp"

#include <cmath>

#include "gti3d/errors.hpp"

namespace gti3d::gt {

const char* to_string(TransformFamily f) {
    switch (f) {
    case TransformFamily::affine: return "affine";
    case TransformFamily::projective: return "projective";
    case TransformFamily::radial: return "radial";
    }
    return "?";
}

TransformFamily parse_family(const std::string& s) {
    if (s == "affine") return TransformFamily::affine;
    if (s == "projective") return TransformFamily::projective;
    if (s == "radial") return TransformFamily::radial;
    throw ConfigError("unknown transform family '" + s + "'");
}

int param_count(TransformFamily f) {
    switch (f) {
    case TransformFamily::affine: return 6;
    case TransformFamily::projective: return 8;
    case TransformFamily::radial: return 8;
    }
    throw ConfigError("invalid transform family tag");
}

std::vector<double> identity_row(TransformFamily f) {
    std::vector<double> row(static_cast<std::size_t>(param_count(f)), 0.0);
    row[0] = 1.0;
    row[4] = 1.0;
    return row;
}

const char* to_string(LocNetMode m) {
    switch (m) {
    case LocNetMode::temporal: return "temporal";
    case LocNetMode::per_frame: return "per_frame";
    case LocNetMode::pooled: return "pooled";
    }
    return "?";
}

LocNetMode parse_locnet_mode(const std::string& s) {
    if (s == "temporal") return LocNetMode::temporal;
    if (s == "per_frame") return LocNetMode::per_frame;
    if (s == "pooled") return LocNetMode::pooled;
    throw ConfigError("unknown localization network mode '" + s + "'");
}

template <typename T>
SampleGrid<T> generate_grid(const TransformParams<T>& params, int height, int width) {
    const int p = param_count(params.family);
    if (params.frames < 1 || params.values.size() != static_cast<std::size_t>(params.frames) * p)
        throw ConfigError("generate_grid: parameter array does not match frame count");
    if (height < 1 || width < 1) throw ConfigError("generate_grid: empty grid");
    SampleGrid<T> g{params.frames, height, width, {}, {}};
    g.coords.resize(g.cells() * 2);
    g.valid.resize(g.cells());
    std::size_t cell = 0;
    for (int d = 0; d < params.frames; ++d) {
        const auto v = params.row(d);
        for (int h = 0; h < height; ++h) {
            const T y = target_coord<T>(h, height);
            for (int w = 0; w < width; ++w, ++cell) {
                const T x = target_coord<T>(w, width);
                T xs = v[0] * x + v[1] * y + v[2];
                T ys = v[3] * x + v[4] * y + v[5];
                bool ok = true;
                if (params.family == TransformFamily::projective) {
                    const T den = v[6] * x + v[7] * y + T(1);
                    if (std::abs(den) < static_cast<T>(kProjectiveMinDenominator)) {
                        xs = ys = T(0);
                        ok = false;
                    } else {
                        xs /= den;
                        ys /= den;
                    }
                } else if (params.family == TransformFamily::radial) {
                    const T r2 = xs * xs + ys * ys;
                    const T s = T(1) + v[6] * r2 + v[7] * r2 * r2;
                    xs *= s;
                    ys *= s;
                }
                if (!std::isfinite(xs) || !std::isfinite(ys)) {
                    xs = ys = T(0);
                    ok = false;
                }
                g.coords[2 * cell] = xs;
                g.coords[2 * cell + 1] = ys;
                g.valid[cell] = ok && xs >= T(-1) && xs <= T(1) && ys >= T(-1) && ys <= T(1);
            }
        }
    }
    return g;
}

template <typename T>
void generate_grid_backward(const TransformParams<T>& params, int height, int width,
                            std::span<const T> grad_coords, std::span<T> grad_params) {
    const int p = param_count(params.family);
    const std::size_t cells = static_cast<std::size_t>(params.frames) * height * width;
    if (grad_coords.size() != 2 * cells || grad_params.size() != params.values.size())
        throw ConfigError("generate_grid_backward: buffer size mismatch");
    std::size_t cell = 0;
    for (int d = 0; d < params.frames; ++d) {
        const auto v = params.row(d);
        T* g = grad_params.data() + static_cast<std::size_t>(d) * p;
        for (int h = 0; h < height; ++h) {
            const T y = target_coord<T>(h, height);
            for (int w = 0; w < width; ++w, ++cell) {
                const T x = target_coord<T>(w, width);
                T gx = grad_coords[2 * cell];
                T gy = grad_coords[2 * cell + 1];
                if (gx == T(0) && gy == T(0)) continue;
                if (params.family == TransformFamily::projective) {
                    const T den = v[6] * x + v[7] * y + T(1);
                    if (std::abs(den) < static_cast<T>(kProjectiveMinDenominator)) continue;
                    const T xs = (v[0] * x + v[1] * y + v[2]) / den;
                    const T ys = (v[3] * x + v[4] * y + v[5]) / den;
                    const T common = -(gx * xs + gy * ys) / den;
                    g[6] += common * x;
                    g[7] += common * y;
                    gx /= den;
                    gy /= den;
                } else if (params.family == TransformFamily::radial) {
                    const T qx = v[0] * x + v[1] * y + v[2];
                    const T qy = v[3] * x + v[4] * y + v[5];
                    const T r2 = qx * qx + qy * qy;
                    const T s = T(1) + v[6] * r2 + v[7] * r2 * r2;
                    const T dot = gx * qx + gy * qy;
                    g[6] += dot * r2;
                    g[7] += dot * r2 * r2;
                    const T ds_dr2 = v[6] + T(2) * v[7] * r2;
                    const T gqx = gx * s + dot * ds_dr2 * T(2) * qx;
                    const T gqy = gy * s + dot * ds_dr2 * T(2) * qy;
                    gx = gqx;
                    gy = gqy;
                }
                g[0] += gx * x;
                g[1] += gx * y;
                g[2] += gx;
                g[3] += gy * x;
                g[4] += gy * y;
                g[5] += gy;
            }
        }
    }
}

namespace {

template <typename T>
void check_grid(const Tensor4<T>& f, const SampleGrid<T>& grid) {
    const Dims4& d = f.dims();
    if (grid.frames != d.d || grid.height != d.h || grid.width != d.w)
        throw ConfigError("sample: grid " + std::to_string(grid.frames) + "x" + std::to_string(grid.height) + "x" +
                          std::to_string(grid.width) + " does not match features " + d.str());
    if (grid.coords.size() != 2 * grid.cells() || grid.valid.size() != grid.cells())
        throw ConfigError("sample: malformed grid");
}

// Pixel-space location of normalized coordinate c on an axis of n samples;
// the lower corner is clamped to n-2 so both corners stay inside the image.
template <typename T>
void locate(T c, int n, int& i0, int& i1, T& a) {
    if (n == 1) {
        i0 = i1 = 0;
        a = T(0);
        return;
    }
    const T u = (c + T(1)) * static_cast<T>(n - 1) / T(2);
    i0 = std::min(static_cast<int>(std::floor(u)), n - 2);
    i0 = std::max(i0, 0);
    i1 = i0 + 1;
    a = u - static_cast<T>(i0);
}

template <typename T>
bool in_range(T x, T y) {
    return x >= T(-1) && x <= T(1) && y >= T(-1) && y <= T(1);
}

} // namespace

template <typename T>
Tensor4<T> sample(const Tensor4<T>& f, const SampleGrid<T>& grid) {
    check_grid(f, grid);
    const Dims4& d = f.dims();
    Tensor4<T> out(d);
    std::size_t cell = 0;
    for (int fr = 0; fr < d.d; ++fr)
        for (int h = 0; h < d.h; ++h)
            for (int w = 0; w < d.w; ++w, ++cell) {
                const T xs = grid.coords[2 * cell];
                const T ys = grid.coords[2 * cell + 1];
                if (!grid.valid[cell] || !in_range(xs, ys)) continue;
                int x0, x1, y0, y1;
                T ax, ay;
                locate(xs, d.w, x0, x1, ax);
                locate(ys, d.h, y0, y1, ay);
                const T w00 = (T(1) - ax) * (T(1) - ay), w01 = ax * (T(1) - ay);
                const T w10 = (T(1) - ax) * ay, w11 = ax * ay;
                for (int c = 0; c < d.c; ++c) {
                    const T* s = f.slice(fr, c);
                    out.at(fr, c, h, w) = w00 * s[y0 * d.w + x0] + w01 * s[y0 * d.w + x1] + w10 * s[y1 * d.w + x0] +
                                          w11 * s[y1 * d.w + x1];
                }
            }
    return out;
}

template <typename T>
void sample_backward(const Tensor4<T>& f, const SampleGrid<T>& grid, const Tensor4<T>& grad_y,
                     Tensor4<T>* grad_f, std::span<T> grad_coords) {
    check_grid(f, grid);
    const Dims4& d = f.dims();
    if (grad_y.dims() != d) throw ConfigError("sample_backward: grad_y dims mismatch");
    if (grad_f && grad_f->dims() != d) throw ConfigError("sample_backward: grad_features dims mismatch");
    if (!grad_coords.empty() && grad_coords.size() != grid.coords.size())
        throw ConfigError("sample_backward: grad_coords size mismatch");
    const T half_w = static_cast<T>(d.w - 1) / T(2);
    const T half_h = static_cast<T>(d.h - 1) / T(2);
    std::size_t cell = 0;
    for (int fr = 0; fr < d.d; ++fr)
        for (int h = 0; h < d.h; ++h)
            for (int w = 0; w < d.w; ++w, ++cell) {
                const T xs = grid.coords[2 * cell];
                const T ys = grid.coords[2 * cell + 1];
                if (!grid.valid[cell] || !in_range(xs, ys)) continue;
                int x0, x1, y0, y1;
                T ax, ay;
                locate(xs, d.w, x0, x1, ax);
                locate(ys, d.h, y0, y1, ay);
                const T w00 = (T(1) - ax) * (T(1) - ay), w01 = ax * (T(1) - ay);
                const T w10 = (T(1) - ax) * ay, w11 = ax * ay;
                T gax = T(0), gay = T(0);
                for (int c = 0; c < d.c; ++c) {
                    const T g = grad_y.at(fr, c, h, w);
                    if (g == T(0)) continue;
                    const T* s = f.slice(fr, c);
                    const T v00 = s[y0 * d.w + x0], v01 = s[y0 * d.w + x1];
                    const T v10 = s[y1 * d.w + x0], v11 = s[y1 * d.w + x1];
                    gax += g * ((T(1) - ay) * (v01 - v00) + ay * (v11 - v10));
                    gay += g * ((T(1) - ax) * (v10 - v00) + ax * (v11 - v01));
                    if (grad_f) {
                        T* gs = grad_f->slice(fr, c);
                        gs[y0 * d.w + x0] += g * w00;
                        gs[y0 * d.w + x1] += g * w01;
                        gs[y1 * d.w + x0] += g * w10;
                        gs[y1 * d.w + x1] += g * w11;
                    }
                }
                if (!grad_coords.empty()) {
                    grad_coords[2 * cell] += gax * half_w;
                    grad_coords[2 * cell + 1] += gay * half_h;
                }
            }
}

template <typename T>
LocNetWeights register_locnet(diff::ParamStore<T>& store, const std::string& prefix, const LocNetConfig& config,
                              std::mt19937_64& rng) {
    if (config.in_channels < 1 || config.hidden < 1) throw ConfigError("locnet: channel counts must be >= 1");
    LocNetWeights w;
    w.config = config;
    const int kt = config.mode == LocNetMode::per_frame ? 1 : 3;
    w.conv1 = diff::Conv3dShape{config.hidden, config.in_channels, {kt, 3, 3}, {1, 2, 2}, {kt / 2, 1, 1}};
    w.conv2 = diff::Conv3dShape{config.hidden, config.hidden, {kt, 3, 3}, {1, 2, 2}, {kt / 2, 1, 1}};

    auto he_init = [&](std::size_t idx, const diff::Conv3dShape& s) {
        const double fan_in = static_cast<double>(s.weight_count()) / s.c_out;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (T& v : store[idx].value) v = static_cast<T>(dist(rng));
    };
    w.conv1_w = store.add(prefix + ".conv1.w", w.conv1.weight_shape());
    w.conv1_b = store.add(prefix + ".conv1.b", {config.hidden});
    he_init(w.conv1_w, w.conv1);
    w.conv2_w = store.add(prefix + ".conv2.w", w.conv2.weight_shape());
    w.conv2_b = store.add(prefix + ".conv2.b", {config.hidden});
    he_init(w.conv2_w, w.conv2);

    const int p = param_count(config.family);
    w.fc_w = store.add(prefix + ".fc.w", {p, config.hidden});
    w.fc_b = store.add(prefix + ".fc.b", {p});
    const auto id = identity_row(config.family);
    for (int i = 0; i < p; ++i) store[w.fc_b].value[i] = static_cast<T>(id[i]);
    return w;
}

template <typename T>
TransformParams<T> localize(const Tensor4<T>& f, const diff::ParamStore<T>& store, const LocNetWeights& w,
                            GtTrace<T>* trace) {
    if (f.dims().c != w.config.in_channels)
        throw ConfigError("localize: features have " + std::to_string(f.dims().c) + " channels, localization net expects " +
                          std::to_string(w.config.in_channels));
    Tensor4<T> a1 = diff::conv3d(f, store.value(w.conv1_w), store.value(w.conv1_b), w.conv1);
    Tensor4<T> r1 = diff::relu(a1);
    Tensor4<T> a2 = diff::conv3d(r1, store.value(w.conv2_w), store.value(w.conv2_b), w.conv2);
    Tensor4<T> r2 = diff::relu(a2);
    std::vector<T> pooled = diff::spatial_avg_pool(r2);
    const int frames = f.dims().d;
    const int hidden = w.config.hidden;
    if (w.config.mode == LocNetMode::pooled) {
        std::vector<T> mean(hidden, T(0));
        for (int d = 0; d < frames; ++d)
            for (int k = 0; k < hidden; ++k) mean[k] += pooled[static_cast<std::size_t>(d) * hidden + k];
        for (T& v : mean) v /= static_cast<T>(frames);
        pooled = std::move(mean);
    }
    const int p = param_count(w.config.family);
    const int rows = static_cast<int>(pooled.size()) / hidden;
    TransformParams<T> params{w.config.family, frames, std::vector<T>(static_cast<std::size_t>(frames) * p)};
    for (int r = 0; r < rows; ++r) {
        const auto row = diff::dense<T>(std::span<const T>(pooled).subspan(static_cast<std::size_t>(r) * hidden, hidden),
                                        store.value(w.fc_w), store.value(w.fc_b), p);
        for (int d = (rows == 1 ? 0 : r); d < (rows == 1 ? frames : r + 1); ++d)
            std::copy(row.begin(), row.end(), params.values.begin() + static_cast<std::ptrdiff_t>(d) * p);
    }
    if (trace) {
        trace->input = f;
        trace->a1 = std::move(a1);
        trace->r1 = std::move(r1);
        trace->a2 = std::move(a2);
        trace->r2 = std::move(r2);
        trace->pooled = std::move(pooled);
        trace->params = params;
    }
    return params;
}

template <typename T>
void localize_backward(const GtTrace<T>& tr, diff::ParamStore<T>& store, const LocNetWeights& w,
                       std::span<const T> grad_params, Tensor4<T>& grad_input) {
    const int frames = tr.input.dims().d;
    const int hidden = w.config.hidden;
    const int p = param_count(w.config.family);
    if (grad_params.size() != static_cast<std::size_t>(frames) * p)
        throw ConfigError("localize_backward: gradient size mismatch");
    const int rows = static_cast<int>(tr.pooled.size()) / hidden;

    std::vector<T> grad_pooled(tr.pooled.size(), T(0));
    std::vector<T> grad_row(p);
    for (int r = 0; r < rows; ++r) {
        std::fill(grad_row.begin(), grad_row.end(), T(0));
        for (int d = (rows == 1 ? 0 : r); d < (rows == 1 ? frames : r + 1); ++d)
            for (int i = 0; i < p; ++i) grad_row[i] += grad_params[static_cast<std::size_t>(d) * p + i];
        diff::dense_backward<T>(std::span<const T>(tr.pooled).subspan(static_cast<std::size_t>(r) * hidden, hidden),
                                store.value(w.fc_w), grad_row,
                                std::span<T>(grad_pooled).subspan(static_cast<std::size_t>(r) * hidden, hidden),
                                store.grad(w.fc_w), store.grad(w.fc_b));
    }
    if (rows == 1 && frames > 1) {
        std::vector<T> spread(static_cast<std::size_t>(frames) * hidden);
        for (int d = 0; d < frames; ++d)
            for (int k = 0; k < hidden; ++k)
                spread[static_cast<std::size_t>(d) * hidden + k] = grad_pooled[k] / static_cast<T>(frames);
        grad_pooled = std::move(spread);
    } else if (rows == 1) {
        for (T& v : grad_pooled) v /= static_cast<T>(frames);
    }

    Tensor4<T> g_r2(tr.r2.dims());
    diff::spatial_avg_pool_backward<T>(grad_pooled, g_r2);
    Tensor4<T> g_a2(tr.a2.dims());
    diff::relu_backward(tr.a2, g_r2, g_a2);
    Tensor4<T> g_r1(tr.r1.dims());
    diff::conv3d_backward<T>(tr.r1, store.value(w.conv2_w), w.conv2, g_a2, &g_r1, store.grad(w.conv2_w),
                          store.grad(w.conv2_b));
    Tensor4<T> g_a1(tr.a1.dims());
    diff::relu_backward(tr.a1, g_r1, g_a1);
    diff::conv3d_backward<T>(tr.input, store.value(w.conv1_w), w.conv1, g_a1, &grad_input, store.grad(w.conv1_w),
                          store.grad(w.conv1_b));
}

template <typename T>
Tensor4<T> gt_forward(const Tensor4<T>& f, const diff::ParamStore<T>& store, const LocNetWeights& w,
                      GtTrace<T>* trace) {
    const TransformParams<T> params = localize(f, store, w, trace);
    SampleGrid<T> grid = generate_grid(params, f.dims().h, f.dims().w);
    Tensor4<T> out = sample(f, grid);
    if (trace) trace->grid = std::move(grid);
    return out;
}

template <typename T>
void gt_backward(const GtTrace<T>& tr, diff::ParamStore<T>& store, const LocNetWeights& w,
                 const Tensor4<T>& grad_transformed, Tensor4<T>& grad_input) {
    std::vector<T> grad_coords(tr.grid.coords.size(), T(0));
    sample_backward(tr.input, tr.grid, grad_transformed, &grad_input, std::span<T>(grad_coords));
    std::vector<T> grad_params(tr.params.values.size(), T(0));
    generate_grid_backward<T>(tr.params, tr.grid.height, tr.grid.width, grad_coords, grad_params);
    localize_backward<T>(tr, store, w, grad_params, grad_input);
}

#define GTI3D_INSTANTIATE_GT(T)                                                                                    \
    template SampleGrid<T> generate_grid(const TransformParams<T>&, int, int);                                     \
    template void generate_grid_backward(const TransformParams<T>&, int, int, std::span<const T>, std::span<T>);   \
    template Tensor4<T> sample(const Tensor4<T>&, const SampleGrid<T>&);                                           \
    template void sample_backward(const Tensor4<T>&, const SampleGrid<T>&, const Tensor4<T>&, Tensor4<T>*,         \
                                  std::span<T>);                                                                   \
    template LocNetWeights register_locnet(diff::ParamStore<T>&, const std::string&, const LocNetConfig&,          \
                                           std::mt19937_64&);                                                      \
    template TransformParams<T> localize(const Tensor4<T>&, const diff::ParamStore<T>&, const LocNetWeights&,      \
                                         GtTrace<T>*);                                                             \
    template void localize_backward(const GtTrace<T>&, diff::ParamStore<T>&, const LocNetWeights&,                 \
                                    std::span<const T>, Tensor4<T>&);                                              \
    template Tensor4<T> gt_forward(const Tensor4<T>&, const diff::ParamStore<T>&, const LocNetWeights&, GtTrace<T>*); \
    template void gt_backward(const GtTrace<T>&, diff::ParamStore<T>&, const LocNetWeights&, const Tensor4<T>&,     \
                              Tensor4<T>&);

GTI3D_INSTANTIATE_GT(float)
GTI3D_INSTANTIATE_GT(double)

#undef GTI3D_INSTANTIATE_GT

} // namespace gti3d::gt
