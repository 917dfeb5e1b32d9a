// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "json.hpp"

#include "fexgan/networks.hpp"

namespace fexgan {

/// Architecture hyperparameters shared by the generator and discriminator.
struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t latent_dim = 128;
  std::size_t base_features = 64;
  std::size_t max_features = 256;
  std::size_t disc_base_features = 64;
  std::size_t disc_dense_units = 256;
  double negative_slope = 0.2;

  EncoderSpec encoder() const {
    return {image_size, base_features, max_features, latent_dim, kAffectCount};
  }
  DecoderSpec decoder() const {
    return {image_size, base_features, max_features, latent_dim, kAffectCount, negative_slope};
  }
  DiscriminatorSpec discriminator() const {
    return {image_size, disc_base_features, disc_dense_units, kAffectCount};
  }

  void validate() const {
    encoder().validate();
    decoder().validate();
    discriminator().validate();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Json>
void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"image_size", c.image_size},
           {"latent_dim", c.latent_dim},
           {"base_features", c.base_features},
           {"max_features", c.max_features},
           {"disc_base_features", c.disc_base_features},
           {"disc_dense_units", c.disc_dense_units},
           {"negative_slope", c.negative_slope}};
}

template <typename Json>
void from_json(const Json& j, ModelConfig& c) {
  j.at("image_size").get_to(c.image_size);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("base_features").get_to(c.base_features);
  j.at("max_features").get_to(c.max_features);
  j.at("disc_base_features").get_to(c.disc_base_features);
  j.at("disc_dense_units").get_to(c.disc_dense_units);
  j.at("negative_slope").get_to(c.negative_slope);
}

/// Generator and discriminator built from one init seed.
struct GanModel {
  ModelConfig config;
  Generator<float> generator;
  Discriminator<float> discriminator;

  GanModel(const ModelConfig& cfg, std::uint64_t init_seed)
      : config(cfg),
        generator(cfg.encoder(), cfg.decoder(), Rng::derive(init_seed, 10)),
        discriminator(cfg.discriminator(), Rng::derive(init_seed, 20)) {}
};

}  // namespace fexgan
