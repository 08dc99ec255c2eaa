#pragma once

#include "makeitso/errors.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace makeitso {

// Adam with bias correction. One instance per parameter group.
template <typename T>
class Adam {
public:
    Adam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, T(0)), v_(size, T(0)) {
        require(std::isfinite(lr) && lr >= 0, "Adam: learning rate must be finite and non-negative");
    }

    void step(std::span<T> params, std::span<const T> grads) {
        require(params.size() == m_.size() && grads.size() == m_.size(), "Adam: size mismatch");
        ++t_;
        if (lr_ == 0) return;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
        const T step = static_cast<T>(lr_ / c1);
        const T inv_c2 = static_cast<T>(1.0 / c2);
        const T eps = static_cast<T>(eps_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const T g = grads[i];
            m_[i] = b1 * m_[i] + (T(1) - b1) * g;
            v_[i] = b2 * v_[i] + (T(1) - b2) * g * g;
            params[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
        }
    }

    long steps() const { return t_; }
    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<T> m_, v_;
};

}  // namespace makeitso
