#include "gti3d/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "gti3d/errors.hpp"
#include "gti3d/gradcheck.hpp"
#include "gti3d/gt_module.hpp"
#include "gti3d/model.hpp"
#include "gti3d/ops.hpp"

namespace gti3d::diff {

namespace {

using Vec = std::vector<double>;
using Fn = std::function<double(std::span<const double>)>;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Tensor4<double> tensor_of(const Dims4& d, std::span<const double> v) {
    return Tensor4<double>(d, Vec(v.begin(), v.end()));
}

Vec concat(std::initializer_list<std::span<const double>> parts) {
    Vec out;
    for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

struct Case {
    Vec x;
    Fn f;
    Vec analytic;
    GradCheckOptions options;
};

// Each check contracts the op output with a fixed random cotangent r, so the
// scalar is <r, op(x)> and its gradient is the op's backward applied to r.

Case conv3d_case(unsigned seed) {
    const Dims4 xd{2, 3, 5, 5};
    const Conv3dShape shape{2, 3, {2, 3, 3}, {1, 2, 2}, {1, 1, 1}};
    const Dims4 yd = shape.output_dims(xd);
    const std::size_t nx = xd.size(), nw = shape.weight_count(), nb = 2;
    const Vec r = random_normal(yd.size(), seed + 100);
    Case c;
    c.x = random_normal(nx + nw + nb, seed);
    c.f = [=](std::span<const double> v) {
        return dot(r, conv3d<double>(tensor_of(xd, v.subspan(0, nx)), v.subspan(nx, nw), v.subspan(nx + nw, nb), shape)
                          .span());
    };
    const std::span<const double> v(c.x);
    Tensor4<double> gx(xd);
    Vec gw(nw, 0.0), gb(nb, 0.0);
    conv3d_backward<double>(tensor_of(xd, v.subspan(0, nx)), v.subspan(nx, nw), shape, tensor_of(yd, r), &gx, gw, gb);
    c.analytic = concat({gx.span(), gw, gb});
    return c;
}

Case maxpool_case(unsigned seed) {
    const Dims4 xd{2, 3, 6, 6};
    const PoolShape shape;
    const Dims4 yd = shape.output_dims(xd);
    const Vec r = random_normal(yd.size(), seed + 100);
    Case c;
    c.x = random_normal(xd.size(), seed);
    c.f = [=](std::span<const double> v) { return dot(r, maxpool3d(tensor_of(xd, v), shape).y.span()); };
    const auto fw = maxpool3d(tensor_of(xd, c.x), shape);
    Tensor4<double> gx(xd);
    maxpool3d_backward<double>(fw.argmax, tensor_of(yd, r), gx);
    c.analytic = gx.vec();
    return c;
}

Case dense_case(unsigned seed) {
    const int in = 12, out = 5;
    const std::size_t nw = static_cast<std::size_t>(in) * out;
    const Vec r = random_normal(out, seed + 100);
    Case c;
    c.x = random_normal(in + nw + out, seed);
    c.f = [=](std::span<const double> v) {
        return dot(r, dense<double>(v.subspan(0, in), v.subspan(in, nw), v.subspan(in + nw, out), out));
    };
    const std::span<const double> v(c.x);
    Vec gx(in, 0.0), gw(nw, 0.0), gb(out, 0.0);
    dense_backward<double>(v.subspan(0, in), v.subspan(in, nw), r, gx, gw, gb);
    c.analytic = concat({gx, gw, gb});
    return c;
}

Case relu_case(unsigned seed) {
    const Dims4 xd{2, 3, 5, 5};
    const Vec r = random_normal(xd.size(), seed + 100);
    Case c;
    c.x = random_normal(xd.size(), seed);
    c.f = [=](std::span<const double> v) { return dot(r, relu(tensor_of(xd, v)).span()); };
    Tensor4<double> gx(xd);
    relu_backward<double>(tensor_of(xd, c.x), tensor_of(xd, r), gx);
    c.analytic = gx.vec();
    const Vec x = c.x;
    c.options.skip = [x](std::size_t i) { return std::abs(x[i]) < 1e-3; };
    return c;
}

Case spatial_softmax_case(unsigned seed) {
    const Dims4 xd{2, 3, 5, 5};
    const Vec r = random_normal(xd.size(), seed + 100);
    Case c;
    c.x = random_normal(xd.size(), seed);
    c.f = [=](std::span<const double> v) { return dot(r, spatial_softmax(tensor_of(xd, v)).span()); };
    Tensor4<double> gx(xd);
    spatial_softmax_backward<double>(spatial_softmax(tensor_of(xd, c.x)), tensor_of(xd, r), gx);
    c.analytic = gx.vec();
    return c;
}

Case kl_case(unsigned seed) {
    const Dims4 xd{2, 3, 5, 5};
    const Tensor4<double> p = spatial_softmax(tensor_of(xd, random_normal(xd.size(), seed + 100)));
    Case c;
    // Perturbations of q stay far inside the normalization tolerance.
    c.x = spatial_softmax(tensor_of(xd, random_normal(xd.size(), seed))).vec();
    c.f = [=](std::span<const double> v) { return kl_divergence(p, tensor_of(xd, v)); };
    Tensor4<double> gq(xd);
    kl_divergence_backward(p, tensor_of(xd, c.x), 1.0, gq);
    c.analytic = gq.vec();
    c.options.step = 1e-7;
    return c;
}

Case cross_entropy_case(unsigned seed) {
    const int k = 7, label = 3;
    Case c;
    c.x = random_normal(k, seed);
    c.f = [=](std::span<const double> v) { return cross_entropy(v, label); };
    c.analytic.assign(k, 0.0);
    cross_entropy_backward<double>(c.x, label, 1.0, c.analytic);
    return c;
}

// Near-identity parameters perturbed by small noise, for all three families.
Vec jittered_params(gt::TransformFamily family, int frames, unsigned seed, double scale) {
    const auto id = gt::identity_row(family);
    const Vec noise = random_normal(id.size() * frames, seed, scale);
    Vec v(noise.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = id[i % id.size()] + noise[i];
    return v;
}

Case generate_grid_case(unsigned seed) {
    const int frames = 2, h = 5, w = 5;
    const gt::TransformFamily families[] = {gt::TransformFamily::affine, gt::TransformFamily::projective,
                                            gt::TransformFamily::radial};
    std::vector<std::size_t> offsets;
    Case c;
    for (auto fam : families) {
        offsets.push_back(c.x.size());
        const Vec p = jittered_params(fam, frames, seed + static_cast<unsigned>(offsets.size()), 0.1);
        c.x.insert(c.x.end(), p.begin(), p.end());
    }
    const std::size_t cells = static_cast<std::size_t>(frames) * h * w * 2;
    const Vec r = random_normal(cells * 3, seed + 100);
    auto params_at = [=](std::span<const double> v, int k) {
        const std::size_t n = static_cast<std::size_t>(gt::param_count(families[k])) * frames;
        return gt::TransformParams<double>{families[k], frames, Vec(v.begin() + offsets[k], v.begin() + offsets[k] + n)};
    };
    c.f = [=](std::span<const double> v) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k)
            s += dot(std::span<const double>(r).subspan(k * cells, cells),
                     gt::generate_grid(params_at(v, k), h, w).coords);
        return s;
    };
    c.analytic.assign(c.x.size(), 0.0);
    for (int k = 0; k < 3; ++k) {
        const auto p = params_at(c.x, k);
        gt::generate_grid_backward<double>(p, h, w, std::span<const double>(r).subspan(k * cells, cells),
                                           std::span<double>(c.analytic).subspan(offsets[k], p.values.size()));
    }
    return c;
}

// Distance of a normalized coordinate from the nearest pixel-grid line.
double grid_line_distance(double x, int n) {
    const double u = (x + 1.0) * 0.5 * (n - 1);
    return std::abs(u - std::round(u));
}

Case sample_case(unsigned seed) {
    const Dims4 fd{2, 3, 5, 5};
    gt::SampleGrid<double> grid{fd.d, fd.h, fd.w, {}, {}};
    std::mt19937_64 rng(seed + 7);
    std::uniform_real_distribution<double> coord(-0.95, 0.95);
    // Bilinear sampling has kinks on the pixel grid; keep every sample point
    // well away from them.
    for (std::size_t i = 0; i < grid.cells(); ++i) {
        double x, y;
        do {
            x = coord(rng);
            y = coord(rng);
        } while (grid_line_distance(x, fd.w) < 0.05 || grid_line_distance(y, fd.h) < 0.05);
        grid.coords.push_back(x);
        grid.coords.push_back(y);
        grid.valid.push_back(1);
    }
    const std::size_t nf = fd.size();
    const Vec r = random_normal(nf, seed + 100);
    Case c;
    c.x = concat({random_normal(nf, seed), grid.coords});
    c.f = [=](std::span<const double> v) {
        auto g = grid;
        g.coords.assign(v.begin() + nf, v.end());
        return dot(r, gt::sample(tensor_of(fd, v.subspan(0, nf)), g).span());
    };
    Tensor4<double> gf(fd);
    Vec gc(grid.coords.size(), 0.0);
    gt::sample_backward<double>(tensor_of(fd, std::span<const double>(c.x).subspan(0, nf)), grid, tensor_of(fd, r), &gf,
                                gc);
    c.analytic = concat({gf.span(), gc});
    return c;
}

Case gt_forward_case(unsigned seed) {
    const Dims4 fd{2, 3, 5, 5};
    const gt::LocNetConfig cfg{fd.c, 3, gt::LocNetMode::temporal, gt::TransformFamily::radial};
    ParamStore<double> store;
    std::mt19937_64 rng(seed);
    const gt::LocNetWeights w = gt::register_locnet(store, "gt", cfg, rng);
    // Move away from the identity start, whose grid sits exactly on pixel
    // centers, and give the regression layer nonzero weights so gradients
    // reach the conv stack.
    {
        const Vec fc = random_normal(store[w.fc_w].size(), seed + 11, 0.05);
        std::copy(fc.begin(), fc.end(), store[w.fc_w].value.begin());
        const Vec b = jittered_params(cfg.family, 1, seed + 12, 0.05);
        std::copy(b.begin(), b.end(), store[w.fc_b].value.begin());
        store[w.fc_b].value[0] = 0.83;
        store[w.fc_b].value[4] = 0.87;
    }
    const std::size_t nf = fd.size();
    std::vector<std::size_t> offsets;
    Case c;
    c.x = random_normal(nf, seed);
    for (auto& p : store) {
        offsets.push_back(c.x.size());
        c.x.insert(c.x.end(), p.value.begin(), p.value.end());
    }
    const Vec r = random_normal(nf, seed + 100);
    auto load = [=](std::span<const double> v) {
        ParamStore<double> s = store;
        for (std::size_t k = 0; k < s.size(); ++k)
            std::copy_n(v.begin() + offsets[k], s[k].size(), s[k].value.begin());
        return s;
    };
    c.f = [=](std::span<const double> v) {
        const ParamStore<double> s = load(v);
        return dot(r, gt::gt_forward(tensor_of(fd, v.subspan(0, nf)), s, w).span());
    };
    ParamStore<double> s = load(c.x);
    gt::GtTrace<double> trace;
    gt::gt_forward(tensor_of(fd, std::span<const double>(c.x).subspan(0, nf)), s, w, &trace);
    Tensor4<double> gin(fd);
    gt::gt_backward(trace, s, w, tensor_of(fd, r), gin);
    c.analytic = gin.vec();
    for (auto& p : s) c.analytic.insert(c.analytic.end(), p.grad.begin(), p.grad.end());
    c.options.step = 1e-6;
    return c;
}

Case guided_loss_case(unsigned seed) {
    const std::vector<Dims4> taps{{2, 3, 5, 5}, {2, 2, 3, 3}};
    const int k = 5, label = 2;
    std::vector<Tensor4<double>> rgb;
    std::size_t n = 0;
    for (std::size_t j = 0; j < taps.size(); ++j) {
        rgb.push_back(tensor_of(taps[j], random_normal(taps[j].size(), seed + 50 + static_cast<unsigned>(j))));
        n += taps[j].size();
    }
    const std::vector<unsigned char> active(taps.size(), 1);
    auto split = [=](std::span<const double> v) {
        std::vector<Tensor4<double>> fish;
        std::size_t off = 0;
        for (const auto& d : taps) {
            fish.push_back(tensor_of(d, v.subspan(off, d.size())));
            off += d.size();
        }
        return fish;
    };
    Case c;
    c.x = random_normal(n + k, seed);
    c.f = [=](std::span<const double> v) {
        return model::guided_loss<double>(rgb, split(v), v.subspan(n, k), label, active).total;
    };
    model::LossGrads<double> g;
    model::guided_loss<double>(rgb, split(c.x), std::span<const double>(c.x).subspan(n, k), label, active, &g);
    for (const auto& t : g.taps) c.analytic.insert(c.analytic.end(), t.vec().begin(), t.vec().end());
    c.analytic.insert(c.analytic.end(), g.logits.begin(), g.logits.end());
    return c;
}

struct Entry {
    std::string name;
    std::function<Case(unsigned)> build;
};

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries{
        {"conv3d", conv3d_case},
        {"maxpool3d", maxpool_case},
        {"dense", dense_case},
        {"relu", relu_case},
        {"spatial_softmax", spatial_softmax_case},
        {"kl_divergence", kl_case},
        {"cross_entropy", cross_entropy_case},
        {"generate_grid", generate_grid_case},
        {"sample", sample_case},
        {"gt_forward", gt_forward_case},
        {"guided_loss", guided_loss_case},
    };
    return entries;
}

} // namespace

const std::vector<std::string>& gradcheck_ops() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& e : registry()) n.push_back(e.name);
        return n;
    }();
    return names;
}

std::vector<OpCheckResult> run_gradcheck_suite(const SuiteOptions& options) {
    const auto& ops = gradcheck_ops();
    if (!options.corrupt.empty() && std::find(ops.begin(), ops.end(), options.corrupt) == ops.end())
        throw ConfigError("gradcheck: unknown op '" + options.corrupt + "'");
    std::vector<OpCheckResult> out;
    for (const auto& e : registry()) {
        Case c = e.build(options.seed);
        if (e.name == options.corrupt)
            for (double& g : c.analytic) g = g * 1.01 + 1e-3;
        const auto r = grad_check(c.f, c.x, c.analytic, c.options);
        out.push_back({e.name, r.max_relative_error, r.checked,
                       r.checked > 0 && r.max_relative_error <= options.tolerance});
    }
    return out;
}

} // namespace gti3d::diff
