#include "gti3d/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "gti3d/errors.hpp"

namespace gti3d::diff {

template <typename T>
std::size_t ParamStore<T>::add(std::string name, std::vector<int> shape, T fill) {
    if (contains(name)) throw ConfigError("ParamStore: duplicate parameter name '" + name + "'");
    std::size_t n = 1;
    for (int s : shape) {
        if (s < 1) throw ConfigError("ParamStore: non-positive extent in shape of '" + name + "'");
        n *= static_cast<std::size_t>(s);
    }
    params_.push_back(Param<T>{std::move(name), std::move(shape), std::vector<T>(n, fill),
                               std::vector<T>(n, T(0))});
    return params_.size() - 1;
}

template <typename T>
std::size_t ParamStore<T>::find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return i;
    throw ConfigError("ParamStore: no parameter named '" + name + "'");
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(),
                       [&](const Param<T>& p) { return p.name == name; });
}

template <typename T>
void ParamStore<T>::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

template <typename T>
void sgd_step(ParamStore<T>& store, T learning_rate) {
    for (const auto& p : store) {
        for (T g : p.grad)
            if (!std::isfinite(g))
                throw NumericError("sgd_step: non-finite gradient in parameter '" + p.name + "'");
    }
    for (auto& p : store) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= learning_rate * p.grad[i];
        std::fill(p.grad.begin(), p.grad.end(), T(0));
    }
}

template class ParamStore<float>;
template class ParamStore<double>;
template void sgd_step<float>(ParamStore<float>&, float);
template void sgd_step<double>(ParamStore<double>&, double);

} // namespace gti3d::diff
