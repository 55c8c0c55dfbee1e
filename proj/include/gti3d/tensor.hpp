#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gti3d/errors.hpp"

namespace gti3d {

// Extents of a D x C x H x W activation (frames, channels, height, width).
struct Dims4 {
    int d = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t size() const {
        return static_cast<std::size_t>(d) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool valid() const { return d >= 1 && c >= 1 && h >= 1 && w >= 1; }
    bool operator==(const Dims4&) const = default;
    std::string str() const;
};

// Dense row-major D x C x H x W grid. T is double in gradient-check mode and
// float in training mode; the two are never mixed inside one run.
template <typename T>
class Tensor4 {
public:
    using value_type = T;

    Tensor4() = default;
    explicit Tensor4(Dims4 dims, T fill = T(0)) : dims_(dims) {
        if (!dims.valid()) throw ConfigError("Tensor4: all dims must be >= 1, got " + dims.str());
        data_.assign(dims.size(), fill);
    }
    Tensor4(Dims4 dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        if (!dims.valid()) throw ConfigError("Tensor4: all dims must be >= 1, got " + dims.str());
        if (data_.size() != dims.size())
            throw ConfigError("Tensor4: data length does not match " + dims.str());
    }

    const Dims4& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    std::size_t index(int d, int c, int h, int w) const {
        return ((static_cast<std::size_t>(d) * dims_.c + c) * dims_.h + h) * dims_.w + w;
    }
    T& at(int d, int c, int h, int w) { return data_[index(d, c, h, w)]; }
    const T& at(int d, int c, int h, int w) const { return data_[index(d, c, h, w)]; }

    // Start of the (d, c) H x W slice.
    T* slice(int d, int c) { return data_.data() + index(d, c, 0, 0); }
    const T* slice(int d, int c) const { return data_.data() + index(d, c, 0, 0); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    template <typename U>
    Tensor4<U> cast() const {
        return Tensor4<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
    }

private:
    Dims4 dims_{};
    std::vector<T> data_;
};

// A value together with its accumulated cotangent.
template <typename T>
struct GradPair {
    Tensor4<T> value;
    Tensor4<T> grad;

    explicit GradPair(Tensor4<T> v) : value(std::move(v)), grad(value.dims()) {}
    void zero_grad() { grad.fill(T(0)); }
};

} // namespace gti3d
