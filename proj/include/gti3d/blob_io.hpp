#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gti3d/tensor.hpp"

// "UVHT" tensor blobs: 4 magic bytes, u32 version (= 1), u32 ndim,
// ndim x u32 extents, then row-major float32 payload. All integers and floats
// are little-endian.
namespace gti3d::io {

inline constexpr std::string_view kBlobMagic = "UVHT";
inline constexpr std::uint32_t kBlobVersion = 1;

struct Blob {
    std::vector<std::uint32_t> shape;
    std::vector<float> data;
};

std::string encode_blob(std::span<const std::uint32_t> shape, std::span<const float> data);

// `origin` names the source in error messages. Throws CorruptData.
Blob decode_blob(std::string_view bytes, const std::string& origin);

void write_blob(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                std::span<const float> data);
Blob read_blob(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

template <typename T>
Blob to_blob(const Tensor4<T>& t) {
    const Dims4& d = t.dims();
    return Blob{{static_cast<std::uint32_t>(d.d), static_cast<std::uint32_t>(d.c), static_cast<std::uint32_t>(d.h),
                 static_cast<std::uint32_t>(d.w)},
                std::vector<float>(t.vec().begin(), t.vec().end())};
}

template <typename T>
Tensor4<T> to_tensor(const Blob& b, const std::string& origin) {
    if (b.shape.size() != 4) throw CorruptData(origin + ": expected a 4-d tensor blob");
    const Dims4 d{static_cast<int>(b.shape[0]), static_cast<int>(b.shape[1]), static_cast<int>(b.shape[2]),
                  static_cast<int>(b.shape[3])};
    return Tensor4<T>(d, std::vector<T>(b.data.begin(), b.data.end()));
}

} // namespace gti3d::io
