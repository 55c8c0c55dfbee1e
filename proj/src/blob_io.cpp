#include "gti3d/blob_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gti3d/errors.hpp"

namespace gti3d::io {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

} // namespace

std::string encode_blob(std::span<const std::uint32_t> shape, std::span<const float> data) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    if (n != data.size()) throw ConfigError("encode_blob: shape does not match payload length");
    std::string out(kBlobMagic);
    put_u32(out, kBlobVersion);
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto s : shape) put_u32(out, s);
    out.reserve(out.size() + 4 * data.size());
    for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

Blob decode_blob(std::string_view bytes, const std::string& origin) {
    if (bytes.size() < 12 || bytes.substr(0, 4) != kBlobMagic) throw CorruptData(origin + ": bad magic");
    if (get_u32(bytes, 4) != kBlobVersion)
        throw CorruptData(origin + ": unsupported version " + std::to_string(get_u32(bytes, 4)));
    const std::uint32_t ndim = get_u32(bytes, 8);
    if (ndim == 0 || ndim > 8) throw CorruptData(origin + ": implausible ndim " + std::to_string(ndim));
    std::size_t off = 12;
    if (bytes.size() < off + 4ull * ndim) throw CorruptData(origin + ": truncated header");
    Blob b;
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i, off += 4) {
        const std::uint32_t s = get_u32(bytes, off);
        if (s == 0) throw CorruptData(origin + ": zero extent in header");
        b.shape.push_back(s);
        n *= s;
    }
    if (bytes.size() != off + 4 * n)
        throw CorruptData(origin + ": payload is " + std::to_string(bytes.size() - off) + " bytes, header implies " +
                          std::to_string(4 * n));
    b.data.resize(n);
    for (std::size_t i = 0; i < n; ++i, off += 4) b.data[i] = std::bit_cast<float>(get_u32(bytes, off));
    return b;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptData(path.string() + ": cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(path.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError(path.string() + ": write failed");
}

void write_blob(const std::filesystem::path& path, std::span<const std::uint32_t> shape,
                std::span<const float> data) {
    write_file(path, encode_blob(shape, data));
}

Blob read_blob(const std::filesystem::path& path) {
    return decode_blob(read_file(path), path.string());
}

} // namespace gti3d::io
