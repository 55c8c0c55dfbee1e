#pragma once

#include <filesystem>

#include "gti3d/tensor.hpp"

// 8-bit greyscale Netpbm images (binary P5 written; P5 and ASCII P2 read).
// Pixel values map linearly between [0, maxval] and [0, 1].
namespace gti3d::harness {

// Returns a 1 x 1 x H x W tensor. CorruptData for malformed files.
Tensor4<float> read_pgm(const std::filesystem::path& path);

// Writes channel 0 of frame 0, clamped to [0, 1] and rounded to 8 bits.
void write_pgm(const std::filesystem::path& path, const Tensor4<float>& image);

} // namespace gti3d::harness
