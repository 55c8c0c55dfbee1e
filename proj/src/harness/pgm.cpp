#include "gti3d/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gti3d/blob_io.hpp"
#include "gti3d/errors.hpp"

namespace gti3d::harness {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in) {
    std::string t;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!t.empty()) break;
            continue;
        }
        t += c;
    }
    return t;
}

int header_int(std::istream& in, const std::string& origin) {
    const std::string t = token(in);
    try {
        std::size_t used = 0;
        const int v = std::stoi(t, &used);
        if (used == t.size() && v > 0) return v;
    } catch (const std::exception&) {
    }
    throw CorruptData(origin + ": bad PGM header field '" + t + "'");
}

} // namespace

Tensor4<float> read_pgm(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const std::string bytes = io::read_file(path);
    std::istringstream in(bytes);
    const std::string magic = token(in);
    if (magic != "P5" && magic != "P2") throw CorruptData(origin + ": not a PGM file");
    const int w = header_int(in, origin);
    const int h = header_int(in, origin);
    const int maxval = header_int(in, origin);
    if (maxval > 255) throw CorruptData(origin + ": only 8-bit PGM is supported");
    Tensor4<float> img(Dims4{1, 1, h, w});
    const std::size_t n = img.size();
    if (magic == "P5") {
        const auto pos = static_cast<std::size_t>(in.tellg());
        if (bytes.size() - pos < n) throw CorruptData(origin + ": truncated pixel data");
        for (std::size_t i = 0; i < n; ++i)
            img[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) / static_cast<float>(maxval);
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            int v = -1;
            if (!(in >> v) || v < 0 || v > maxval) throw CorruptData(origin + ": bad pixel value");
            img[i] = static_cast<float>(v) / static_cast<float>(maxval);
        }
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const Tensor4<float>& image) {
    const Dims4& d = image.dims();
    std::string out = "P5\n" + std::to_string(d.w) + " " + std::to_string(d.h) + "\n255\n";
    const float* src = image.slice(0, 0);
    for (std::size_t i = 0; i < d.plane(); ++i)
        out += static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f)));
    io::write_file(path, out);
}

} // namespace gti3d::harness
