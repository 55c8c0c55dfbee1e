#include "gti3d/fisheye_optics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gti3d/errors.hpp"

namespace gti3d::optics {

const char* to_string(ProjectionModel m) {
    switch (m) {
    case ProjectionModel::equidistant: return "equidistant";
    case ProjectionModel::equisolid: return "equisolid";
    case ProjectionModel::rectilinear: return "rectilinear";
    }
    return "?";
}

ProjectionModel parse_projection_model(const std::string& s) {
    if (s == "equidistant") return ProjectionModel::equidistant;
    if (s == "equisolid") return ProjectionModel::equisolid;
    if (s == "rectilinear") return ProjectionModel::rectilinear;
    throw ConfigError("unknown projection model '" + s + "'");
}

PinholeIntrinsics PinholeIntrinsics::centered(int width, int height) {
    return {width / 2.0, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
}

void PinholeIntrinsics::validate() const {
    if (!(focal > 0.0)) throw ConfigError("pinhole focal must be > 0");
    if (width < 2 || height < 2) throw ConfigError("pinhole image must be at least 2x2");
    if (!(center_x >= 0.0 && center_x <= width - 1 && center_y >= 0.0 && center_y <= height - 1))
        throw ConfigError("pinhole principal point outside the image");
}

FisheyeIntrinsics FisheyeIntrinsics::centered(int width, int height, double focal) {
    FisheyeIntrinsics fe;
    fe.focal = focal;
    fe.center_x = (width - 1) / 2.0;
    fe.center_y = (height - 1) / 2.0;
    fe.width = width;
    fe.height = height;
    return fe;
}

void FisheyeIntrinsics::validate() const {
    if (!(focal > 0.0)) throw ConfigError("fisheye focal must be > 0");
    if (!(fov > 0.0 && fov <= std::numbers::pi)) throw ConfigError("fisheye fov must lie in (0, pi]");
    if (width < 2 || height < 2) throw ConfigError("fisheye image must be at least 2x2");
    if (!(center_x >= 0.0 && center_x <= width - 1 && center_y >= 0.0 && center_y <= height - 1))
        throw ConfigError("fisheye center outside the image");
    if (model == ProjectionModel::rectilinear && fov >= std::numbers::pi)
        throw ConfigError("rectilinear model cannot cover a 180 degree field of view");
}

double FisheyeIntrinsics::radius(double theta) const {
    switch (model) {
    case ProjectionModel::equidistant: return focal * theta;
    case ProjectionModel::equisolid: return 2.0 * focal * std::sin(theta / 2.0);
    case ProjectionModel::rectilinear: return focal * std::tan(theta);
    }
    return 0.0;
}

double FisheyeIntrinsics::angle(double r) const {
    switch (model) {
    case ProjectionModel::equidistant: return r / focal;
    case ProjectionModel::equisolid: return 2.0 * std::asin(std::min(1.0, r / (2.0 * focal)));
    case ProjectionModel::rectilinear: return std::atan(r / focal);
    }
    return 0.0;
}

std::optional<Point2> flat_to_fisheye_coord(Point2 p, const PinholeIntrinsics& flat, const FisheyeIntrinsics& fe) {
    const double dx = p.x - flat.center_x;
    const double dy = p.y - flat.center_y;
    const double rho = std::hypot(dx, dy);
    if (rho == 0.0) return Point2{fe.center_x, fe.center_y};
    const double theta = std::atan(rho / flat.focal);
    if (theta > fe.fov / 2.0) return std::nullopt;
    const double r = fe.radius(theta);
    return Point2{fe.center_x + r * dx / rho, fe.center_y + r * dy / rho};
}

std::optional<Point2> fisheye_to_flat_coord(Point2 q, const PinholeIntrinsics& flat, const FisheyeIntrinsics& fe) {
    const double dx = q.x - fe.center_x;
    const double dy = q.y - fe.center_y;
    const double r = std::hypot(dx, dy);
    if (r == 0.0) return Point2{flat.center_x, flat.center_y};
    if (r > fe.max_radius()) return std::nullopt;
    const double theta = fe.angle(r);
    // A pinhole cannot image rays at or beyond 90 degrees.
    if (theta >= std::numbers::pi / 2.0) return std::nullopt;
    const double rho = flat.focal * std::tan(theta);
    return Point2{flat.center_x + rho * dx / r, flat.center_y + rho * dy / r};
}

std::optional<double> bilinear_at(const float* src, int h, int w, double u, double v) {
    if (!(u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1)) return std::nullopt;
    const int x0 = std::min(static_cast<int>(u), w - 2 < 0 ? 0 : w - 2);
    const int y0 = std::min(static_cast<int>(v), h - 2 < 0 ? 0 : h - 2);
    const double ax = u - x0;
    const double ay = v - y0;
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double top = (1.0 - ax) * src[y0 * w + x0] + ax * src[y0 * w + x1];
    const double bot = (1.0 - ax) * src[y1 * w + x0] + ax * src[y1 * w + x1];
    return (1.0 - ay) * top + ay * bot;
}

Tensor4<float> warp_frame(const Tensor4<float>& frame, WarpDirection direction, const PinholeIntrinsics& flat,
                          const FisheyeIntrinsics& fe, float fill) {
    flat.validate();
    fe.validate();
    if (fe.model == ProjectionModel::rectilinear)
        throw ConfigError("warp_frame: rectilinear fisheye model makes the pair a degenerate pinhole-to-pinhole map");
    const bool to_fisheye = direction == WarpDirection::flat_to_fisheye;
    const int src_w = to_fisheye ? flat.width : fe.width;
    const int src_h = to_fisheye ? flat.height : fe.height;
    const int dst_w = to_fisheye ? fe.width : flat.width;
    const int dst_h = to_fisheye ? fe.height : flat.height;
    const Dims4& d = frame.dims();
    if (d.d != 1) throw ConfigError("warp_frame: expected a single frame, got " + d.str());
    if (d.h != src_h || d.w != src_w)
        throw ConfigError("warp_frame: frame " + d.str() + " does not match source intrinsics " +
                          std::to_string(src_h) + "x" + std::to_string(src_w));

    Tensor4<float> out(Dims4{1, d.c, dst_h, dst_w}, fill);
    for (int y = 0; y < dst_h; ++y)
        for (int x = 0; x < dst_w; ++x) {
            const Point2 dst{static_cast<double>(x), static_cast<double>(y)};
            const auto src = to_fisheye ? fisheye_to_flat_coord(dst, flat, fe) : flat_to_fisheye_coord(dst, flat, fe);
            if (!src) continue;
            for (int c = 0; c < d.c; ++c) {
                const auto v = bilinear_at(frame.slice(0, c), src_h, src_w, src->x, src->y);
                if (v) out.at(0, c, y, x) = static_cast<float>(*v);
            }
        }
    return out;
}

Tensor4<float> make_checkerboard(int height, int width, int square) {
    if (square < 1) throw ConfigError("checkerboard square must be >= 1");
    Tensor4<float> t(Dims4{1, 1, height, width});
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) t.at(0, 0, y, x) = ((x / square + y / square) % 2) ? 1.0f : 0.0f;
    return t;
}

double psnr(const Tensor4<float>& a, const Tensor4<float>& b, const std::vector<unsigned char>& mask) {
    if (a.dims() != b.dims()) throw ConfigError("psnr: dims mismatch");
    const std::size_t plane = a.dims().plane();
    if (!mask.empty() && mask.size() != plane) throw ConfigError("psnr: mask size mismatch");
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!mask.empty() && !mask[i % plane]) continue;
        const double e = static_cast<double>(a[i]) - b[i];
        se += e * e;
        ++n;
    }
    if (n == 0) throw ConfigError("psnr: empty mask");
    const double mse = se / static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<unsigned char> interior_mask(const PinholeIntrinsics& flat, double fraction) {
    const double max_r = std::min({flat.center_x, flat.width - 1 - flat.center_x, flat.center_y,
                                   flat.height - 1 - flat.center_y});
    std::vector<unsigned char> m(static_cast<std::size_t>(flat.width) * flat.height, 0);
    for (int y = 0; y < flat.height; ++y)
        for (int x = 0; x < flat.width; ++x)
            m[static_cast<std::size_t>(y) * flat.width + x] =
                std::hypot(x - flat.center_x, y - flat.center_y) <= fraction * max_r ? 1 : 0;
    return m;
}

} // namespace gti3d::optics
