#pragma once

#include <cmath>
#include <vector>

#include "btsumm/nn/tensor.hpp"
#include "btsumm/simd.hpp"

namespace btsumm::nn {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;  // <= 0 disables clipping
};

// Adam with bias correction and optional global-norm gradient clipping.
template <class T>
class Adam {
  public:
    Adam(std::vector<Param<T>*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (auto* p : params_) {
            m_.emplace_back(p->value.numel(), T(0));
            v_.emplace_back(p->value.numel(), T(0));
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    // Scales all gradients down to clip_norm if the global norm exceeds it;
    // returns the pre-clip norm.
    double clip() {
        double sq = 0;
        for (auto* p : params_)
            sq += static_cast<double>(
                simd::dot(p->grad.v.data(), p->grad.v.data(), p->grad.numel()));
        double norm = std::sqrt(sq);
        if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) {
            T s = static_cast<T>(cfg_.clip_norm / norm);
            for (auto* p : params_) simd::scale(s, p->grad.v.data(), p->grad.numel());
        }
        return norm;
    }

    void step() {
        ++t_;
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T bc1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
        const T bc2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
        const T lr = static_cast<T>(cfg_.lr);
        const T eps = static_cast<T>(cfg_.eps);
        for (size_t k = 0; k < params_.size(); ++k) {
            Param<T>& p = *params_[k];
            T* m = m_[k].data();
            T* v = v_[k].data();
            const T* g = p.grad.v.data();
            T* w = p.value.v.data();
            const size_t n = p.value.numel();
            for (size_t i = 0; i < n; ++i) {
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
                T mhat = m[i] / bc1;
                T vhat = v[i] / bc2;
                w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

  private:
    std::vector<Param<T>*> params_;
    std::vector<std::vector<T>> m_, v_;
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace btsumm::nn
