// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fexgan/affect.hpp"
#include "fexgan/layers.hpp"
#include "fexgan/rng.hpp"
#include "fexgan/tensor.hpp"

namespace fexgan {

inline constexpr double kInitStddev = 0.02;
inline constexpr std::size_t kImageChannels = 3;

inline std::size_t halvings(std::size_t image_size) {
  return static_cast<std::size_t>(std::countr_zero(image_size));
}

inline void check_image_size(std::size_t image_size, std::size_t minimum = 16) {
  if (!std::has_single_bit(image_size) || image_size < minimum)
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " must be a power of two >= " + std::to_string(minimum));
}

/// Encoder shape: one stride-2 block per halving down to 1x1. Widths grow
/// from base_features by doubling and saturate at max_features.
struct EncoderSpec {
  std::size_t image_size = 64;
  std::size_t base_features = 64;
  std::size_t max_features = 256;
  std::size_t latent_dim = 128;
  std::size_t condition_dim = kAffectCount;

  void validate() const {
    check_image_size(image_size);
    if (base_features == 0 || max_features < base_features)
      throw ConfigError("encoder features need 0 < base_features <= max_features");
    if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
    if (condition_dim != kAffectCount) throw ConfigError("condition_dim must be 7");
  }

  std::size_t block_count() const { return halvings(image_size); }

  std::vector<std::size_t> feature_widths() const {
    std::vector<std::size_t> widths;
    std::size_t w = base_features;
    for (std::size_t i = 0; i < block_count(); ++i) {
      widths.push_back(std::min(w, max_features));
      w *= 2;
    }
    return widths;
  }
};

/// Decoder shape: mirrors the encoder. Latent and condition each get an
/// affine projection (to max_features and base_features), are concatenated
/// into a 1x1 map and upsampled by transposed convolutions.
struct DecoderSpec {
  std::size_t image_size = 64;
  std::size_t base_features = 64;
  std::size_t max_features = 256;
  std::size_t latent_dim = 128;
  std::size_t condition_dim = kAffectCount;
  double negative_slope = 0.2;

  void validate() const {
    EncoderSpec{image_size, base_features, max_features, latent_dim, condition_dim}.validate();
    if (!(negative_slope >= 0.0 && negative_slope < 1.0))
      throw ConfigError("negative_slope must lie in [0, 1)");
  }

  std::size_t block_count() const { return halvings(image_size); }
  std::size_t latent_features() const { return max_features; }
  std::size_t condition_features() const { return base_features; }

  /// Output channels per upsampling block; the last block emits RGB.
  std::vector<std::size_t> block_widths() const {
    const auto enc = EncoderSpec{image_size, base_features, max_features, latent_dim}.feature_widths();
    std::vector<std::size_t> widths;
    for (std::size_t j = 0; j + 1 < enc.size(); ++j) widths.push_back(enc[enc.size() - 2 - j]);
    widths.push_back(kImageChannels);
    return widths;
  }
};

/// Three stride-2 blocks with widths base, 2*base, 4*base, then a shared
/// dense layer feeding the realness and class heads.
struct DiscriminatorSpec {
  std::size_t image_size = 64;
  std::size_t base_features = 64;
  std::size_t dense_units = 256;
  std::size_t classes = kAffectCount;

  static constexpr std::size_t kBlocks = 3;

  void validate() const {
    check_image_size(image_size);
    if (base_features == 0 || dense_units == 0)
      throw ConfigError("discriminator widths must be positive");
    if (classes != kAffectCount) throw ConfigError("discriminator classes must be 7");
  }

  std::vector<std::size_t> feature_widths() const {
    return {base_features, 2 * base_features, 4 * base_features};
  }
  std::size_t final_extent() const { return image_size >> kBlocks; }
  std::size_t flat_features() const {
    return final_extent() * final_extent() * feature_widths().back();
  }
};

/// Batched Gaussian latent: every member is N x latent_dim.
template <typename T>
struct LatentCode {
  Tensor<T> mu;
  Tensor<T> log_var;
  Tensor<T> sample;
  Tensor<T> epsilon;
};

/// mu + exp(log_var / 2) * epsilon, elementwise.
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& log_var, const Tensor<T>& epsilon) {
  require_shape(log_var.shape(), mu.shape(), "reparameterize log_var");
  require_shape(epsilon.shape(), mu.shape(), "reparameterize epsilon");
  Tensor<T> out(mu.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mu[i] + std::exp(log_var[i] / T{2}) * epsilon[i];
  return out;
}

template <typename T>
Tensor<T> draw_epsilon(std::size_t batch, std::size_t latent_dim, Rng& rng) {
  Tensor<T> eps({batch, latent_dim});
  for (auto& v : eps.values()) v = static_cast<T>(rng.normal());
  return eps;
}

template <typename T>
Tensor<T> affects_to_tensor(std::span<const AffectVector> affects) {
  Tensor<T> out({affects.size(), kAffectCount});
  for (std::size_t i = 0; i < affects.size(); ++i)
    for (std::size_t k = 0; k < kAffectCount; ++k)
      out[i * kAffectCount + k] = static_cast<T>(affects[i][k]);
  return out;
}

template <typename T>
void zero_grads(std::vector<Param<T>*> params) {
  for (auto* p : params) p->zero_grad();
}

// ---------------------------------------------------------------------------

template <typename T>
class Encoder {
 public:
  struct Trace {
    std::vector<typename Conv2d<T>::Cache> conv;
    std::vector<typename BatchNorm<T>::Cache> norm;
    std::vector<Tensor<T>> activations;
    typename Dense<T>::Cache mu_cache;
    typename Dense<T>::Cache log_var_cache;
    std::size_t flat_features = 0;
    Tensor<T> log_var;
    Tensor<T> epsilon;
  };

  Encoder() = default;
  Encoder(const EncoderSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    spec.validate();
    Rng rng(init_seed);
    std::size_t in = kImageChannels;
    const auto widths = spec.feature_widths();
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string prefix = "encoder.block" + std::to_string(i);
      convs_.emplace_back(prefix + ".conv", in, widths[i], false);
      convs_.back().init(rng, kInitStddev);
      norms_.emplace_back(prefix + ".bn", widths[i]);
      in = widths[i];
    }
    const std::size_t head_in = in + spec.condition_dim;
    mu_head_ = Dense<T>("encoder.mu", head_in, spec.latent_dim);
    mu_head_.init(rng, kInitStddev);
    log_var_head_ = Dense<T>("encoder.log_var", head_in, spec.latent_dim);
    log_var_head_.init(rng, kInitStddev);
  }

  const EncoderSpec& spec() const { return spec_; }

  /// Encodes an N x S x S x 3 batch under N x 7 source conditions. The
  /// sample uses the supplied N x latent_dim noise.
  LatentCode<T> forward(const Tensor<T>& images, const Tensor<T>& affects,
                        const Tensor<T>& epsilon, Mode mode, Trace* trace = nullptr) {
    const std::size_t n = images.empty() ? 0 : images.dim(0);
    require_shape(images.shape(), {n, spec_.image_size, spec_.image_size, kImageChannels},
                  "encoder image batch");
    require_shape(affects.shape(), {n, spec_.condition_dim}, "encoder affect batch");
    require_shape(epsilon.shape(), {n, spec_.latent_dim}, "encoder epsilon");
    Trace local;
    Trace& t = trace ? *trace : local;
    t.conv.resize(convs_.size());
    t.norm.resize(norms_.size());
    t.activations.resize(convs_.size());

    Tensor<T> x = images;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = convs_[i].forward(x, t.conv[i]);
      x = norms_[i].forward(x, mode, t.norm[i]);
      x = relu(std::move(x));
      t.activations[i] = x;
    }
    t.flat_features = x.size() / n;
    const Tensor<T> features = concat_columns(x.reshaped({n, t.flat_features}), affects);

    LatentCode<T> code;
    code.mu = mu_head_.forward(features, t.mu_cache);
    code.log_var = log_var_head_.forward(features, t.log_var_cache);
    code.epsilon = epsilon;
    code.sample = reparameterize(code.mu, code.log_var, epsilon);
    t.log_var = code.log_var;
    t.epsilon = epsilon;
    return code;
  }

  /// Back-propagates gradients on the sample and directly on mu/log_var
  /// (either may be empty) into the encoder parameters.
  void backward(const Trace& t, const Tensor<T>& d_sample, const Tensor<T>& d_mu,
                const Tensor<T>& d_log_var) {
    Tensor<T> gmu(t.log_var.shape()), glv(t.log_var.shape());
    for (std::size_t i = 0; i < gmu.size(); ++i) {
      if (!d_mu.empty()) gmu[i] += d_mu[i];
      if (!d_log_var.empty()) glv[i] += d_log_var[i];
      if (!d_sample.empty()) {
        gmu[i] += d_sample[i];
        glv[i] += d_sample[i] * t.epsilon[i] * T{0.5} * std::exp(t.log_var[i] / T{2});
      }
    }
    Tensor<T> d_features = mu_head_.backward(gmu, t.mu_cache, {});
    const Tensor<T> d_lv_features = log_var_head_.backward(glv, t.log_var_cache, {});
    for (std::size_t i = 0; i < d_features.size(); ++i) d_features[i] += d_lv_features[i];

    auto [d_flat, d_affect] = split_columns(d_features, t.flat_features);
    Tensor<T> g = d_flat.reshaped(t.activations.back().shape());
    for (std::size_t i = convs_.size(); i-- > 0;) {
      g = relu_backward(std::move(g), t.activations[i]);
      g = norms_[i].backward(g, t.norm[i], {});
      g = convs_[i].backward(g, t.conv[i], {.params = true, .input = i > 0});
    }
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].parameters(out);
      norms_[i].parameters(out);
    }
    mu_head_.parameters(out);
    log_var_head_.parameters(out);
    return out;
  }

  std::vector<StateEntry<T>> state() {
    std::vector<StateEntry<T>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].state(out);
      norms_[i].state(out);
    }
    mu_head_.state(out);
    log_var_head_.state(out);
    return out;
  }

 private:
  EncoderSpec spec_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm<T>> norms_;
  Dense<T> mu_head_;
  Dense<T> log_var_head_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Decoder {
 public:
  struct Trace {
    typename Dense<T>::Cache latent_cache;
    typename Dense<T>::Cache condition_cache;
    std::vector<typename ConvTranspose2d<T>::Cache> deconv;
    std::vector<typename BatchNorm<T>::Cache> norm;
    std::vector<Tensor<T>> activations;  // last entry is the tanh output
  };

  Decoder() = default;
  Decoder(const DecoderSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    spec.validate();
    Rng rng(init_seed);
    latent_fc_ = Dense<T>("decoder.latent_fc", spec.latent_dim, spec.latent_features());
    latent_fc_.init(rng, kInitStddev);
    condition_fc_ = Dense<T>("decoder.condition_fc", spec.condition_dim, spec.condition_features());
    condition_fc_.init(rng, kInitStddev);

    std::size_t in = spec.latent_features() + spec.condition_features();
    const auto widths = spec.block_widths();
    for (std::size_t j = 0; j < widths.size(); ++j) {
      const std::string prefix = "decoder.block" + std::to_string(j);
      const bool last = j + 1 == widths.size();
      deconvs_.emplace_back(prefix + ".deconv", in, widths[j], last);
      deconvs_.back().init(rng, kInitStddev);
      if (!last) norms_.emplace_back(prefix + ".bn", widths[j]);
      in = widths[j];
    }
  }

  const DecoderSpec& spec() const { return spec_; }

  /// Decodes N x latent_dim codes under N x 7 conditions into an
  /// N x S x S x 3 batch in [-1, 1].
  Tensor<T> forward(const Tensor<T>& latent, const Tensor<T>& condition, Mode mode,
                    Trace* trace = nullptr) {
    const std::size_t n = latent.empty() ? 0 : latent.dim(0);
    require_shape(latent.shape(), {n, spec_.latent_dim}, "decoder latent batch");
    require_shape(condition.shape(), {n, spec_.condition_dim}, "decoder condition batch");
    Trace local;
    Trace& t = trace ? *trace : local;
    t.deconv.resize(deconvs_.size());
    t.norm.resize(norms_.size());
    t.activations.resize(deconvs_.size());

    const Tensor<T> zl = latent_fc_.forward(latent, t.latent_cache);
    const Tensor<T> zc = condition_fc_.forward(condition, t.condition_cache);
    const Tensor<T> joined = concat_columns(zl, zc);
    Tensor<T> x = joined.reshaped({n, 1, 1, joined.dim(1)});
    for (std::size_t j = 0; j < deconvs_.size(); ++j) {
      x = deconvs_[j].forward(x, t.deconv[j]);
      if (j < norms_.size()) {
        x = norms_[j].forward(x, mode, t.norm[j]);
        x = leaky_relu(std::move(x), spec_.negative_slope);
      } else {
        x = tanh_activation(std::move(x));
      }
      t.activations[j] = x;
    }
    return x;
  }

  /// Returns d(loss)/d(latent); parameter gradients are accumulated.
  Tensor<T> backward(const Trace& t, const Tensor<T>& d_images) {
    Tensor<T> g = d_images;
    for (std::size_t j = deconvs_.size(); j-- > 0;) {
      if (j < norms_.size()) {
        g = leaky_relu_backward(std::move(g), t.activations[j], spec_.negative_slope);
        g = norms_[j].backward(g, t.norm[j], {});
      } else {
        g = tanh_backward(std::move(g), t.activations[j]);
      }
      g = deconvs_[j].backward(g, t.deconv[j], {});
    }
    const std::size_t n = g.dim(0);
    auto [d_zl, d_zc] = split_columns(g.reshaped({n, g.size() / n}), spec_.latent_features());
    condition_fc_.backward(d_zc, t.condition_cache, {.params = true, .input = false});
    return latent_fc_.backward(d_zl, t.latent_cache, {});
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    latent_fc_.parameters(out);
    condition_fc_.parameters(out);
    for (std::size_t j = 0; j < deconvs_.size(); ++j) {
      deconvs_[j].parameters(out);
      if (j < norms_.size()) norms_[j].parameters(out);
    }
    return out;
  }

  std::vector<StateEntry<T>> state() {
    std::vector<StateEntry<T>> out;
    latent_fc_.state(out);
    condition_fc_.state(out);
    for (std::size_t j = 0; j < deconvs_.size(); ++j) {
      deconvs_[j].state(out);
      if (j < norms_.size()) norms_[j].state(out);
    }
    return out;
  }

 private:
  DecoderSpec spec_;
  Dense<T> latent_fc_;
  Dense<T> condition_fc_;
  std::vector<ConvTranspose2d<T>> deconvs_;
  std::vector<BatchNorm<T>> norms_;
};

// ---------------------------------------------------------------------------

/// Per-example discriminator decision.
template <typename T>
struct DiscriminatorOutput {
  T realness{};
  std::array<T, kAffectCount> class_probs{};
  T realness_logit{};
  std::array<T, kAffectCount> class_logits{};
};

/// Batched discriminator outputs (N rows).
template <typename T>
struct DiscriminatorBatch {
  Tensor<T> realness_logit;  // N x 1
  Tensor<T> realness;        // N x 1
  Tensor<T> class_logits;    // N x 7
  Tensor<T> class_probs;     // N x 7

  std::size_t size() const { return realness.empty() ? 0 : realness.dim(0); }

  DiscriminatorOutput<T> at(std::size_t i) const {
    DiscriminatorOutput<T> out;
    out.realness = realness[i];
    out.realness_logit = realness_logit[i];
    for (std::size_t k = 0; k < kAffectCount; ++k) {
      out.class_probs[k] = class_probs[i * kAffectCount + k];
      out.class_logits[k] = class_logits[i * kAffectCount + k];
    }
    return out;
  }
};

template <typename T>
class Discriminator {
 public:
  struct Trace {
    std::vector<typename Conv2d<T>::Cache> conv;
    std::vector<typename BatchNorm<T>::Cache> norm;
    std::vector<Tensor<T>> activations;
    typename Dense<T>::Cache shared_cache;
    Tensor<T> shared;
    typename Dense<T>::Cache realness_cache;
    typename Dense<T>::Cache class_cache;
  };

  Discriminator() = default;
  Discriminator(const DiscriminatorSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    spec.validate();
    Rng rng(init_seed);
    std::size_t in = kImageChannels;
    const auto widths = spec.feature_widths();
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string prefix = "discriminator.block" + std::to_string(i);
      convs_.emplace_back(prefix + ".conv", in, widths[i], false);
      convs_.back().init(rng, kInitStddev);
      norms_.emplace_back(prefix + ".bn", widths[i]);
      in = widths[i];
    }
    shared_ = Dense<T>("discriminator.shared", spec.flat_features(), spec.dense_units);
    shared_.init(rng, kInitStddev);
    realness_head_ = Dense<T>("discriminator.realness", spec.dense_units, 1);
    realness_head_.init(rng, kInitStddev);
    class_head_ = Dense<T>("discriminator.classifier", spec.dense_units, spec.classes);
    class_head_.init(rng, kInitStddev);
  }

  const DiscriminatorSpec& spec() const { return spec_; }

  DiscriminatorBatch<T> forward(const Tensor<T>& images, Mode mode, Trace* trace = nullptr,
                                bool update_running = true) {
    const std::size_t n = images.empty() ? 0 : images.dim(0);
    require_shape(images.shape(), {n, spec_.image_size, spec_.image_size, kImageChannels},
                  "discriminator image batch");
    Trace local;
    Trace& t = trace ? *trace : local;
    t.conv.resize(convs_.size());
    t.norm.resize(norms_.size());
    t.activations.resize(convs_.size());

    Tensor<T> x = images;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = convs_[i].forward(x, t.conv[i]);
      x = norms_[i].forward(x, mode, t.norm[i], update_running);
      x = relu(std::move(x));
      t.activations[i] = x;
    }
    t.shared = relu(shared_.forward(x.reshaped({n, spec_.flat_features()}), t.shared_cache));

    DiscriminatorBatch<T> out;
    out.realness_logit = realness_head_.forward(t.shared, t.realness_cache);
    out.realness = out.realness_logit;
    for (auto& v : out.realness.values()) v = sigmoid(v);
    out.class_logits = class_head_.forward(t.shared, t.class_cache);
    out.class_probs = softmax_rows(out.class_logits);
    return out;
  }

  /// Back-propagates logit gradients (N x 1 and N x 7). Returns the image
  /// gradient when requested.
  Tensor<T> backward(const Trace& t, const Tensor<T>& d_realness_logit,
                     const Tensor<T>& d_class_logits, GradRequest req) {
    const GradRequest inner{.params = req.params, .input = true};
    Tensor<T> g = realness_head_.backward(d_realness_logit, t.realness_cache, inner);
    const Tensor<T> gc = class_head_.backward(d_class_logits, t.class_cache, inner);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gc[i];
    g = relu_backward(std::move(g), t.shared);
    g = shared_.backward(g, t.shared_cache, inner);
    g = g.reshaped(t.activations.back().shape());
    for (std::size_t i = convs_.size(); i-- > 0;) {
      g = relu_backward(std::move(g), t.activations[i]);
      g = norms_[i].backward(g, t.norm[i], inner);
      g = convs_[i].backward(g, t.conv[i], {.params = req.params, .input = i > 0 || req.input});
    }
    return g;
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].parameters(out);
      norms_[i].parameters(out);
    }
    shared_.parameters(out);
    realness_head_.parameters(out);
    class_head_.parameters(out);
    return out;
  }

  std::vector<StateEntry<T>> state() {
    std::vector<StateEntry<T>> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      convs_[i].state(out);
      norms_[i].state(out);
    }
    shared_.state(out);
    realness_head_.state(out);
    class_head_.state(out);
    return out;
  }

 private:
  DiscriminatorSpec spec_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm<T>> norms_;
  Dense<T> shared_;
  Dense<T> realness_head_;
  Dense<T> class_head_;
};

// ---------------------------------------------------------------------------

template <typename T>
struct GeneratorOutput {
  Tensor<T> generated;
  LatentCode<T> latent;
};

/// Encoder followed by decoder: G(source, source_affect -> target_affect).
template <typename T>
class Generator {
 public:
  struct Trace {
    typename Encoder<T>::Trace encoder;
    typename Decoder<T>::Trace decoder;
  };

  Generator() = default;
  Generator(const EncoderSpec& enc, const DecoderSpec& dec, std::uint64_t init_seed)
      : encoder_(enc, Rng::derive(init_seed, 1)), decoder_(dec, Rng::derive(init_seed, 2)) {
    if (enc.image_size != dec.image_size || enc.latent_dim != dec.latent_dim)
      throw ConfigError("encoder and decoder specs disagree on image_size or latent_dim");
  }

  Encoder<T>& encoder() { return encoder_; }
  Decoder<T>& decoder() { return decoder_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Decoder<T>& decoder() const { return decoder_; }

  GeneratorOutput<T> forward(const Tensor<T>& source, const Tensor<T>& source_affect,
                             const Tensor<T>& target_affect, const Tensor<T>& epsilon, Mode mode,
                             Trace* trace = nullptr) {
    GeneratorOutput<T> out;
    out.latent = encoder_.forward(source, source_affect, epsilon, mode,
                                  trace ? &trace->encoder : nullptr);
    out.generated = decoder_.forward(out.latent.sample, target_affect, mode,
                                     trace ? &trace->decoder : nullptr);
    return out;
  }

  /// Draws the reparameterization noise from `rng`.
  GeneratorOutput<T> forward(const Tensor<T>& source, const Tensor<T>& source_affect,
                             const Tensor<T>& target_affect, Rng& rng, Mode mode,
                             Trace* trace = nullptr) {
    const std::size_t n = source.empty() ? 0 : source.dim(0);
    return forward(source, source_affect, target_affect,
                   draw_epsilon<T>(n, encoder_.spec().latent_dim, rng), mode, trace);
  }

  void backward(const Trace& t, const Tensor<T>& d_generated, const Tensor<T>& d_mu,
                const Tensor<T>& d_log_var) {
    const Tensor<T> d_sample = decoder_.backward(t.decoder, d_generated);
    encoder_.backward(t.encoder, d_sample, d_mu, d_log_var);
  }

  std::vector<Param<T>*> parameters() {
    auto out = encoder_.parameters();
    for (auto* p : decoder_.parameters()) out.push_back(p);
    return out;
  }

  std::vector<StateEntry<T>> state() {
    auto out = encoder_.state();
    for (auto& e : decoder_.state()) out.push_back(e);
    return out;
  }

 private:
  Encoder<T> encoder_;
  Decoder<T> decoder_;
};

}  // namespace fexgan
