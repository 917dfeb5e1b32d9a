// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fexgan/error.hpp"
#include "fexgan/layers.hpp"

namespace fexgan {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
      throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(epsilon > 0)) throw ConfigError("Adam epsilon must be > 0");
  }
};

/// Adam with bias correction over a fixed parameter list.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param<T>*> params, AdamConfig config)
      : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      first_.emplace_back(p->value.shape());
      second_.emplace_back(p->value.shape());
    }
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const double lr = config_.learning_rate;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        const double mi = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        const double vi = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        p.value[i] -= static_cast<T>(lr * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon));
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  /// Moment buffers, named after their parameters.
  std::vector<StateEntry<T>> state() {
    std::vector<StateEntry<T>> out;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      out.push_back({params_[k]->name + ".adam_m", &first_[k]});
      out.push_back({params_[k]->name + ".adam_v", &second_[k]});
    }
    return out;
  }

 private:
  std::vector<Param<T>*> params_;
  std::vector<Tensor<T>> first_;
  std::vector<Tensor<T>> second_;
  AdamConfig config_;
  std::uint64_t steps_ = 0;
};

}  // namespace fexgan
