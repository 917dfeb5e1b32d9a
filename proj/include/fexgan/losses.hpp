// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>

#include "fexgan/affect.hpp"
#include "fexgan/error.hpp"
#include "fexgan/networks.hpp"
#include "fexgan/tensor.hpp"

namespace fexgan {

/// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before logs.
inline constexpr double kProbEpsilon = 1e-7;

// ---------------------------------------------------------------------------
// Scalar building blocks.

template <typename T>
T clamp_probability(T p) {
  return std::clamp(p, static_cast<T>(kProbEpsilon), static_cast<T>(1.0 - kProbEpsilon));
}

/// -[t ln p + (1 - t) ln(1 - p)] with p clamped.
template <typename T>
T binary_ce(T target, T predicted) {
  const T p = clamp_probability(predicted);
  return -(target * std::log(p) + (T{1} - target) * std::log(T{1} - p));
}

/// d binary_ce / d predicted; zero inside the clamped region.
template <typename T>
T binary_ce_grad(T target, T predicted) {
  const T p = clamp_probability(predicted);
  if (p != predicted) return T{};
  return -target / p + (T{1} - target) / (T{1} - p);
}

/// d binary_ce(t, sigmoid(z)) / dz, unclamped.
template <typename T>
T binary_ce_logit_grad(T target, T logit) {
  return sigmoid(logit) - target;
}

/// -sum_i t_i ln p_i. Soft (non one-hot) targets are allowed.
template <typename T>
T multiclass_ce(const AffectVector& target, std::span<const T> predicted) {
  if (predicted.size() != kAffectCount) throw ShapeError("multiclass_ce: expected 7 probabilities");
  T total{};
  for (std::size_t i = 0; i < kAffectCount; ++i)
    total -= static_cast<T>(target[i]) * std::log(clamp_probability(predicted[i]));
  return total;
}

template <typename T>
std::array<T, kAffectCount> multiclass_ce_grad(const AffectVector& target,
                                               std::span<const T> predicted) {
  std::array<T, kAffectCount> g{};
  for (std::size_t i = 0; i < kAffectCount; ++i) {
    const T p = clamp_probability(predicted[i]);
    g[i] = p == predicted[i] ? -static_cast<T>(target[i]) / p : T{};
  }
  return g;
}

/// Gradient of multiclass_ce(t, softmax(z)) w.r.t. z: p_i * sum(t) - t_i.
template <typename T>
std::array<T, kAffectCount> multiclass_ce_logit_grad(const AffectVector& target,
                                                     std::span<const T> probs) {
  T mass{};
  for (double t : target) mass += static_cast<T>(t);
  std::array<T, kAffectCount> g{};
  for (std::size_t i = 0; i < kAffectCount; ++i) g[i] = probs[i] * mass - static_cast<T>(target[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Adversarial terms on a single discriminator output.

/// phi_b(label, realness) + phi_m(affect, class_probs). Shared by the
/// generator GAN loss and both discriminator terms.
template <typename T>
T adversarial_term(T realness_label, const DiscriminatorOutput<T>& out, const AffectVector& affect) {
  return binary_ce(realness_label, out.realness) +
         multiclass_ce<T>(affect, std::span<const T>(out.class_probs));
}

template <typename T>
T generator_gan_loss(const DiscriminatorOutput<T>& on_fake, const AffectVector& target_affect) {
  return adversarial_term(T{1}, on_fake, target_affect);
}

template <typename T>
T discriminator_real_loss(const DiscriminatorOutput<T>& on_real, const AffectVector& source_affect) {
  return adversarial_term(T{1}, on_real, source_affect);
}

template <typename T>
T discriminator_fake_loss(const DiscriminatorOutput<T>& on_fake, const AffectVector& target_affect) {
  return adversarial_term(T{0}, on_fake, target_affect);
}

/// Gradient of `adversarial_term` w.r.t. the realness probability and the
/// class probabilities.
template <typename T>
struct AdversarialGrad {
  T d_realness{};
  std::array<T, kAffectCount> d_class_probs{};
};

template <typename T>
AdversarialGrad<T> adversarial_term_grad(T realness_label, const DiscriminatorOutput<T>& out,
                                         const AffectVector& affect) {
  return {binary_ce_grad(realness_label, out.realness),
          multiclass_ce_grad<T>(affect, std::span<const T>(out.class_probs))};
}

// ---------------------------------------------------------------------------
// Batch-mean adversarial losses with logit gradients, as used in training.

template <typename T>
struct BatchLoss {
  double value = 0.0;
  Tensor<T> d_realness_logit;  // N x 1
  Tensor<T> d_class_logits;    // N x 7
};

/// Mean over the batch of adversarial_term(label, out_i, affects_i), plus
/// its gradient w.r.t. the discriminator logits scaled by `grad_scale`.
template <typename T>
BatchLoss<T> adversarial_batch_loss(T realness_label, const DiscriminatorBatch<T>& outputs,
                                    std::span<const AffectVector> affects, double grad_scale = 1.0) {
  const std::size_t n = outputs.size();
  if (affects.size() != n) throw ShapeError("adversarial_batch_loss: affect count mismatch");
  BatchLoss<T> loss;
  loss.d_realness_logit = Tensor<T>({n, 1});
  loss.d_class_logits = Tensor<T>({n, kAffectCount});
  const double scale = grad_scale / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto out = outputs.at(i);
    loss.value += static_cast<double>(adversarial_term(realness_label, out, affects[i]));
    loss.d_realness_logit[i] =
        static_cast<T>(scale * binary_ce_logit_grad(realness_label, out.realness_logit));
    const auto g = multiclass_ce_logit_grad<T>(affects[i], std::span<const T>(out.class_probs));
    for (std::size_t k = 0; k < kAffectCount; ++k)
      loss.d_class_logits[i * kAffectCount + k] = static_cast<T>(scale * g[k]);
  }
  loss.value /= static_cast<double>(n);
  return loss;
}

// ---------------------------------------------------------------------------
// Reconstruction and KL terms.

/// Mean absolute difference over every pixel and channel of one image (or
/// equivalently the batch mean of per-image means for equal-size images).
template <typename T>
T reconstruction_loss(const Tensor<T>& generated, const Tensor<T>& target) {
  require_shape(generated.shape(), target.shape(), "reconstruction_loss");
  if (generated.empty()) throw ShapeError("reconstruction_loss: empty tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i)
    total += std::abs(static_cast<double>(generated[i]) - static_cast<double>(target[i]));
  return static_cast<T>(total / static_cast<double>(generated.size()));
}

/// Subgradient of reconstruction_loss w.r.t. `generated` (0 at ties).
template <typename T>
Tensor<T> reconstruction_loss_grad(const Tensor<T>& generated, const Tensor<T>& target,
                                   double scale = 1.0) {
  Tensor<T> g(generated.shape());
  const double unit = scale / static_cast<double>(generated.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T d = generated[i] - target[i];
    g[i] = static_cast<T>(d > T{} ? unit : (d < T{} ? -unit : 0.0));
  }
  return g;
}

/// -1/2 sum_i (1 + log_var_i - mu_i^2 - exp(log_var_i)) for one code.
template <typename T>
T kl_loss(std::span<const T> mu, std::span<const T> log_var) {
  if (mu.size() != log_var.size()) throw ShapeError("kl_loss: length mismatch");
  T total{};
  for (std::size_t i = 0; i < mu.size(); ++i)
    total += T{1} + log_var[i] - mu[i] * mu[i] - std::exp(log_var[i]);
  return -total / T{2};
}

/// Batch mean of kl_loss over the rows of N x n tensors, with gradients
/// scaled by `grad_scale / N`.
template <typename T>
struct KlBatch {
  double value = 0.0;
  Tensor<T> d_mu;
  Tensor<T> d_log_var;
};

template <typename T>
KlBatch<T> kl_batch_loss(const Tensor<T>& mu, const Tensor<T>& log_var, double grad_scale = 1.0) {
  require_shape(log_var.shape(), mu.shape(), "kl_batch_loss");
  const std::size_t n = mu.dim(0);
  KlBatch<T> out;
  out.d_mu = Tensor<T>(mu.shape());
  out.d_log_var = Tensor<T>(mu.shape());
  const double scale = grad_scale / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    out.value += static_cast<double>(kl_loss<T>(mu.slice(r), log_var.slice(r)));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    out.d_mu[i] = static_cast<T>(scale * mu[i]);
    out.d_log_var[i] = static_cast<T>(scale * 0.5 * (std::exp(log_var[i]) - 1.0));
  }
  out.value /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Weighted combinations.

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.003;
  double gamma = 10.0;
  double alpha_after_schedule = 0.3;
  int schedule_epoch = 50;

  void validate() const {
    if (!(alpha >= 0 && beta >= 0 && gamma >= 0 && alpha_after_schedule >= 0))
      throw ConfigError("loss weights must be non-negative");
    if (alpha_after_schedule > alpha)
      throw ConfigError("alpha_after_schedule must not exceed alpha");
    if (schedule_epoch < 0) throw ConfigError("schedule_epoch must be >= 0");
  }
};

/// Adversarial weight in effect during (zero-based) `epoch`.
inline double apply_weight_schedule(const LossWeights& w, int epoch) {
  return epoch < w.schedule_epoch ? w.alpha : w.alpha_after_schedule;
}

struct GeneratorLossBreakdown {
  double gan = 0.0;
  double kl = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;
  double effective_alpha = 0.0;
};

inline GeneratorLossBreakdown generator_total_loss(double gan, double kl, double reconstruction,
                                                   const LossWeights& w, int epoch) {
  GeneratorLossBreakdown b{gan, kl, reconstruction, 0.0, apply_weight_schedule(w, epoch)};
  b.total = b.effective_alpha * gan + w.beta * kl + w.gamma * reconstruction;
  return b;
}

struct DiscriminatorLossBreakdown {
  double real_loss = 0.0;
  double fake_loss = 0.0;
  double total = 0.0;
};

inline DiscriminatorLossBreakdown discriminator_total_loss(double real_loss, double fake_loss) {
  return {real_loss, fake_loss, real_loss + fake_loss};
}

}  // namespace fexgan
