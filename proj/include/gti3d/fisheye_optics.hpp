#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gti3d/tensor.hpp"

// Wide-angle camera model used to synthesize fisheye twins of flat frames and
// to rectify them again for verification.
namespace gti3d::optics {

// Radius as a function of incidence angle theta:
//   equidistant  r = f * theta
//   equisolid    r = 2 f sin(theta / 2)
//   rectilinear  r = f * tan(theta)   (a pinhole; rejected by warp_frame)
enum class ProjectionModel { equidistant, equisolid, rectilinear };

const char* to_string(ProjectionModel m);
ProjectionModel parse_projection_model(const std::string& s);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct PinholeIntrinsics {
    double focal = 16.0;
    double center_x = 15.5;
    double center_y = 15.5;
    int width = 32;
    int height = 32;

    // Principal point at the pixel-grid center, focal = width / 2 (90 deg horizontal fov).
    static PinholeIntrinsics centered(int width, int height);
    void validate() const;  // ConfigError
};

struct FisheyeIntrinsics {
    double focal = 12.0;  // pixels per radian
    double center_x = 15.5;
    double center_y = 15.5;
    double fov = 3.14159265358979323846;  // full angle, radians
    int width = 32;
    int height = 32;
    ProjectionModel model = ProjectionModel::equidistant;

    static FisheyeIntrinsics centered(int width, int height, double focal);
    void validate() const;  // ConfigError

    double radius(double theta) const;
    // Inverse of radius(); valid for r in [0, max_radius()].
    double angle(double r) const;
    double max_radius() const { return radius(fov / 2.0); }
};

// Empty optional marks a point outside the fisheye field of view.
std::optional<Point2> flat_to_fisheye_coord(Point2 p, const PinholeIntrinsics& flat, const FisheyeIntrinsics& fe);
std::optional<Point2> fisheye_to_flat_coord(Point2 q, const PinholeIntrinsics& flat, const FisheyeIntrinsics& fe);

enum class WarpDirection { flat_to_fisheye, fisheye_to_flat };

// Inverse warp of a single frame (D == 1, any channel count) with bilinear
// interpolation. Destination pixels without a valid source take `fill`.
Tensor4<float> warp_frame(const Tensor4<float>& frame, WarpDirection direction, const PinholeIntrinsics& flat,
                          const FisheyeIntrinsics& fe, float fill = 0.0f);

// Bilinear read at pixel coordinate (u, v) of channel slice `src` (h x w);
// nullopt outside [0, w-1] x [0, h-1].
std::optional<double> bilinear_at(const float* src, int h, int w, double u, double v);

Tensor4<float> make_checkerboard(int height, int width, int square);

// PSNR in dB for signals in [0, 1], over cells where mask is nonzero (all cells when mask is empty).
double psnr(const Tensor4<float>& a, const Tensor4<float>& b, const std::vector<unsigned char>& mask = {});

// Flat-image mask of pixels within `fraction` of the largest principal-point-centered
// circle that fits in the image.
std::vector<unsigned char> interior_mask(const PinholeIntrinsics& flat, double fraction);

} // namespace gti3d::optics
