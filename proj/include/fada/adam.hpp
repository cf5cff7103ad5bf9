#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fada/autodiff.hpp"

namespace fada {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    Tensor<T> m;
    Tensor<T> v;
};

// Adam with bias correction over a fixed parameter list. Only the listed
// parameters are ever written.
template <typename T>
class Adam {
public:
    Adam(std::vector<Parameter<T>*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
        if (!(config_.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
        if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
            throw std::invalid_argument("adam: betas must lie in [0,1)");
        }
        states_.reserve(params_.size());
        for (auto* p : params_) states_.push_back({Tensor<T>(p->value.shape()), Tensor<T>(p->value.shape())});
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
        const T lr = static_cast<T>(config_.lr), eps = static_cast<T>(config_.epsilon);
        const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = *params_[k];
            auto& s = states_[k];
            if (p.grad.shape() != p.value.shape()) {
                throw std::logic_error("adam: gradient shape mismatch for " + p.name);
            }
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const T g = p.grad[i];
                s.m[i] = b1 * s.m[i] + (T(1) - b1) * g;
                s.v[i] = b2 * s.v[i] + (T(1) - b2) * g * g;
                const T mhat = s.m[i] * inv_c1;
                const T vhat = s.v[i] * inv_c2;
                p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }
    const std::vector<AdamState<T>>& states() const { return states_; }

private:
    std::vector<Parameter<T>*> params_;
    AdamConfig config_;
    std::vector<AdamState<T>> states_;
    std::uint64_t t_ = 0;
};

}  // namespace fada
