#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "btsumm/common.hpp"

namespace btsumm::nn {

// Dense row-major tensor; rank 1 or 2 in practice. 64-bit T is test mode
// (gradient checks), 32-bit is fast mode.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(numel_of(shape), T(0));
    }
    Tensor(std::vector<int> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
        if (v.size() != numel_of(shape)) throw InvalidArgument("tensor data/shape mismatch");
    }

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }

    size_t numel() const { return v.size(); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() >= 2 ? shape[1] : 1; }

    T* row(int i) { return v.data() + static_cast<size_t>(i) * static_cast<size_t>(cols()); }
    const T* row(int i) const {
        return v.data() + static_cast<size_t>(i) * static_cast<size_t>(cols());
    }

    T& at(int i) { return v[static_cast<size_t>(i)]; }
    T at(int i) const { return v[static_cast<size_t>(i)]; }
    T& at(int i, int j) { return v[static_cast<size_t>(i) * static_cast<size_t>(cols()) + static_cast<size_t>(j)]; }
    T at(int i, int j) const {
        return v[static_cast<size_t>(i) * static_cast<size_t>(cols()) + static_cast<size_t>(j)];
    }

    void zero() { std::fill(v.begin(), v.end(), T(0)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

template <class T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    Param(std::string n, std::vector<int> shape)
        : name(std::move(n)), value(shape), grad(std::move(shape)) {}

    void zero_grad() { grad.zero(); }

    // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
    void init_uniform(std::mt19937_64& rng, int fan_in) {
        double scale = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
        std::uniform_real_distribution<double> dist(-scale, scale);
        for (auto& x : value.v) x = static_cast<T>(dist(rng));
    }
};

}  // namespace btsumm::nn
