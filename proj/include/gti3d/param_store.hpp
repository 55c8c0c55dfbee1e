#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gti3d::diff {

template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;

    std::size_t size() const { return value.size(); }
};

// Named trainable tensors with gradient buffers of matching shape. Layers refer
// to entries by the index returned from add().
template <typename T>
class ParamStore {
public:
    std::size_t add(std::string name, std::vector<int> shape, T fill = T(0));

    std::size_t size() const { return params_.size(); }
    Param<T>& operator[](std::size_t i) { return params_[i]; }
    const Param<T>& operator[](std::size_t i) const { return params_[i]; }

    std::span<T> value(std::size_t i) { return params_[i].value; }
    std::span<const T> value(std::size_t i) const { return params_[i].value; }
    std::span<T> grad(std::size_t i) { return params_[i].grad; }

    // Index of the named parameter; throws ConfigError when absent.
    std::size_t find(const std::string& name) const;
    bool contains(const std::string& name) const;

    void zero_grad();
    std::size_t scalar_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Param<T>> params_;
};

// Plain SGD: p <- p - lr * g for every entry, then zero the gradients.
// A non-finite gradient aborts with NumericError naming the parameter and
// leaves every parameter untouched.
template <typename T>
void sgd_step(ParamStore<T>& store, T learning_rate);

} // namespace gti3d::diff
