// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"

#include "fexgan/affect.hpp"
#include "fexgan/dataset.hpp"
#include "fexgan/model.hpp"

namespace fexgan {

/// Two simultaneously active affects.
struct MixSpec {
  int affect_a = 0;
  int affect_b = 1;
  double weight_a = 1.0;
  double weight_b = 1.0;

  void validate() const {
    check_affect_id(affect_a);
    check_affect_id(affect_b);
    if (affect_a == affect_b) throw ConfigError("mix needs two distinct affects");
    if (!(weight_a > 0.0) || !(weight_b >= 0.0))
      throw ConfigError("mix weights must be positive (weight_b may be 0)");
  }

  AffectVector condition() const {
    AffectVector v{};
    v[static_cast<std::size_t>(affect_a)] = weight_a;
    v[static_cast<std::size_t>(affect_b)] = weight_b;
    return v;
  }
};

/// Decodes `count` latents drawn from N(0, I) under one affect.
inline std::vector<ImageTensor> sample_random(Decoder<float>& decoder, std::size_t count,
                                              const AffectVector& affect, std::uint64_t seed) {
  if (count == 0) throw ConfigError("sample_random: count must be >= 1");
  Rng rng(seed);
  const Tensor<float> z = draw_epsilon<float>(count, decoder.spec().latent_dim, rng);
  const std::vector<AffectVector> conditions(count, affect);
  return unstack(decoder.forward(z, affects_to_tensor<float>(conditions), Mode::eval));
}

/// Latent for one reference image in eval mode. With no rng the code is
/// the mean; otherwise epsilon is drawn from it.
inline Tensor<float> encode_reference(Encoder<float>& encoder, const ImageTensor& reference,
                                      const AffectVector& reference_affect, Rng* rng = nullptr) {
  const std::size_t s = encoder.spec().image_size;
  require_shape(reference.shape(), {s, s, kImageChannels}, "reference image");
  const std::vector<ImageTensor> one{reference};
  const std::vector<AffectVector> aff{reference_affect};
  const Tensor<float> eps = rng ? draw_epsilon<float>(1, encoder.spec().latent_dim, *rng)
                                : Tensor<float>({1, encoder.spec().latent_dim});
  return encoder.forward(stack<float>(one), affects_to_tensor<float>(aff), eps, Mode::eval).sample;
}

/// Encodes the reference once and decodes it under each target condition.
inline std::vector<ImageTensor> transfer_affect(Generator<float>& gen, const ImageTensor& reference,
                                                const AffectVector& reference_affect,
                                                std::span<const AffectVector> targets,
                                                Rng* rng = nullptr) {
  if (targets.empty()) return {};
  const Tensor<float> code = encode_reference(gen.encoder(), reference, reference_affect, rng);
  // One decode per target keeps every tile independent of how many are requested.
  std::vector<ImageTensor> out;
  for (const auto& target : targets) {
    const std::vector<AffectVector> one{target};
    out.push_back(unstack(gen.decoder().forward(code, affects_to_tensor<float>(one), Mode::eval)).front());
  }
  return out;
}

inline ImageTensor mix_affects(Generator<float>& gen, const ImageTensor& reference,
                               const AffectVector& reference_affect, const MixSpec& mix) {
  mix.validate();
  const std::vector<AffectVector> condition{mix.condition()};
  return transfer_affect(gen, reference, reference_affect, condition).front();
}

// ---------------------------------------------------------------------------
// Grids.

inline constexpr int kGridSeparator = 2;

inline unsigned char denormalize(float v) {
  return static_cast<unsigned char>(std::clamp(std::lround((v + 1.0f) * 127.5f), 0L, 255L));
}

/// Tiles images row-major with white 2px separators into an RGB raster.
inline cv::Mat compose_grid(std::span<const ImageTensor> images, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ConfigError("grid needs at least one row and column");
  if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) < images.size())
    throw ConfigError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " cannot hold " +
                      std::to_string(images.size()) + " images");
  if (images.empty()) throw ConfigError("grid needs at least one image");
  const int h = static_cast<int>(images.front().dim(0));
  const int w = static_cast<int>(images.front().dim(1));
  const int sep = kGridSeparator;
  cv::Mat canvas(rows * h + (rows - 1) * sep, cols * w + (cols - 1) * sep, CV_8UC3,
                 cv::Scalar(255, 255, 255));
  for (std::size_t k = 0; k < images.size(); ++k) {
    const auto& img = images[k];
    require_shape(img.shape(), images.front().shape(), "grid tile");
    const int r = static_cast<int>(k) / cols, c = static_cast<int>(k) % cols;
    const int y0 = r * (h + sep), x0 = c * (w + sep);
    for (int y = 0; y < h; ++y) {
      auto* row = canvas.ptr<unsigned char>(y0 + y) + x0 * 3;
      for (int x = 0; x < w * 3; ++x) row[x] = denormalize(img[static_cast<std::size_t>(y * w * 3 + x)]);
    }
  }
  return canvas;
}

/// Writes the grid as a PNG.
inline void render_grid(std::span<const ImageTensor> images, int rows, int cols,
                        const std::filesystem::path& out_path) {
  const cv::Mat rgb = compose_grid(images, rows, cols);
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  if (!cv::imwrite(out_path.string(), bgr)) throw Error("cannot write grid " + out_path.string());
}

/// Sidecar next to a grid: `<grid>.json` with provenance of every tile.
struct GridSidecar {
  std::string mode;
  std::string checkpoint;
  std::uint64_t seed = 0;
  int rows = 0;
  int cols = 0;
  std::vector<AffectVector> tile_affects;
  std::vector<std::string> tile_sources;
};

inline std::filesystem::path write_sidecar(const std::filesystem::path& grid_path,
                                           const GridSidecar& s) {
  nlohmann::ordered_json j;
  j["mode"] = s.mode;
  j["checkpoint"] = s.checkpoint;
  j["seed"] = s.seed;
  j["rows"] = s.rows;
  j["cols"] = s.cols;
  j["grid"] = grid_path.filename().string();
  auto tiles = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.tile_affects.size(); ++i) {
    nlohmann::ordered_json t;
    t["index"] = i;
    t["affect_vector"] = s.tile_affects[i];
    if (i < s.tile_sources.size()) t["source"] = s.tile_sources[i];
    tiles.push_back(t);
  }
  j["tiles"] = tiles;
  auto path = grid_path;
  path += ".json";
  std::ofstream(path, std::ios::trunc) << j.dump(2) << '\n';
  return path;
}

}  // namespace fexgan
