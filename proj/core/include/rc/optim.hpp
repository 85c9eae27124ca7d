#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rc/tensor.hpp"

namespace rc {

enum class OptMethod { kSgdMomentum, kRmsProp, kAdam };

// Per-parameter accumulator state plus the update rules.
//   SGD+momentum:  v <- m*v + g;  w <- w - lr*v
//   RMSProp:       a <- rho*a + (1-rho)*g^2;  w <- w - lr*g/(sqrt(a)+eps)
//   Adam:          standard bias-corrected first/second moments
template <typename T>
class Optimizer {
 public:
  Optimizer(OptMethod method, std::vector<Tensor<T>> params, T lr)
      : method_(method), params_(std::move(params)), lr_(lr) {
    slot_a_.resize(params_.size());
    slot_b_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      slot_a_[i].assign(params_[i].size(), T(0));
      if (method_ == OptMethod::kAdam)
        slot_b_[i].assign(params_[i].size(), T(0));
    }
  }

  T learning_rate() const { return lr_; }
  void set_learning_rate(T lr) { lr_ = lr; }
  long step_count() const { return step_; }
  T momentum = T(0.9);
  T rho = T(0.9);
  T eps = T(1e-8);
  T beta1 = T(0.9);
  T beta2 = T(0.999);

  // Applies one update from the grads currently stored on the parameters.
  // Rejects the whole update if any gradient is non-finite.
  void step() {
    for (auto& p : params_) {
      for (T g : p.grad())
        if (!std::isfinite(static_cast<double>(g)))
          throw std::runtime_error("optimizer_step: non-finite gradient");
    }
    ++step_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      T* w = params_[i].data();
      const std::vector<T>& g = params_[i].grad();
      std::vector<T>& a = slot_a_[i];
      switch (method_) {
        case OptMethod::kSgdMomentum:
          for (std::size_t j = 0; j < g.size(); ++j) {
            a[j] = momentum * a[j] + g[j];
            w[j] -= lr_ * a[j];
          }
          break;
        case OptMethod::kRmsProp:
          for (std::size_t j = 0; j < g.size(); ++j) {
            a[j] = rho * a[j] + (T(1) - rho) * g[j] * g[j];
            w[j] -= lr_ * g[j] / (std::sqrt(a[j]) + eps);
          }
          break;
        case OptMethod::kAdam: {
          std::vector<T>& v = slot_b_[i];
          const T bc1 = T(1) - std::pow(beta1, static_cast<T>(step_));
          const T bc2 = T(1) - std::pow(beta2, static_cast<T>(step_));
          for (std::size_t j = 0; j < g.size(); ++j) {
            a[j] = beta1 * a[j] + (T(1) - beta1) * g[j];
            v[j] = beta2 * v[j] + (T(1) - beta2) * g[j] * g[j];
            const T mhat = a[j] / bc1;
            const T vhat = v[j] / bc2;
            w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps);
          }
          break;
        }
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::vector<Tensor<T>>& params() { return params_; }

 private:
  OptMethod method_;
  std::vector<Tensor<T>> params_;
  T lr_;
  long step_ = 0;
  std::vector<std::vector<T>> slot_a_;
  std::vector<std::vector<T>> slot_b_;
};

}  // namespace rc
