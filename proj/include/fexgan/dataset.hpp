// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fexgan/affect.hpp"
#include "fexgan/error.hpp"
#include "fexgan/rng.hpp"
#include "fexgan/tensor.hpp"

namespace fexgan {

namespace fs = std::filesystem;

/// H x W x 3 image with values in [-1, 1].
using ImageTensor = Tensor<float>;

struct CorpusEntry {
  int identity = 0;
  int affect = 0;
  fs::path path;

  friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

/// Labeled file list with a per-(identity, affect) cell lookup.
class CorpusIndex {
 public:
  CorpusIndex() = default;
  CorpusIndex(std::vector<CorpusEntry> entries, std::vector<std::string> identity_names,
              AffectNames affect_names)
      : entries_(std::move(entries)),
        identity_names_(std::move(identity_names)),
        affect_names_(std::move(affect_names)) {
    cells_.assign(identity_names_.size() * kAffectCount, {});
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.identity < 0 || e.identity >= identity_count())
        throw DataError("corpus entry with identity outside the identity table");
      check_affect_id(e.affect);
      cells_[cell_slot(e.identity, e.affect)].push_back(i);
    }
  }

  const std::vector<CorpusEntry>& entries() const { return entries_; }
  const CorpusEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int identity_count() const { return static_cast<int>(identity_names_.size()); }
  const std::vector<std::string>& identity_names() const { return identity_names_; }
  const AffectNames& affect_names() const { return affect_names_; }

  /// Entry indices of one (identity, affect) cell, in file order.
  std::span<const std::size_t> cell(int identity, int affect) const {
    if (identity < 0 || identity >= identity_count()) throw DataError("identity out of range");
    check_affect_id(affect);
    return cells_[cell_slot(identity, affect)];
  }

  /// Lists empty (identity, affect) cells as "identity/affect" strings.
  std::vector<std::string> holes() const {
    std::vector<std::string> out;
    for (int id = 0; id < identity_count(); ++id)
      for (int a = 0; a < static_cast<int>(kAffectCount); ++a)
        if (cell(id, a).empty()) out.push_back(identity_names_[id] + "/" + affect_names_[a]);
    return out;
  }

 private:
  std::size_t cell_slot(int identity, int affect) const {
    return static_cast<std::size_t>(identity) * kAffectCount + static_cast<std::size_t>(affect);
  }

  std::vector<CorpusEntry> entries_;
  std::vector<std::string> identity_names_;
  AffectNames affect_names_ = default_affect_names();
  std::vector<std::vector<std::size_t>> cells_;
};

inline bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<fs::path> sorted_children(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().starts_with('.')) continue;
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Indexes `root/<identity>/<affect>/<file>.png|jpg`. Every identity must
/// provide every configured affect.
inline CorpusIndex scan_corpus(const fs::path& root,
                               const AffectNames& affect_names = default_affect_names()) {
  if (!fs::is_directory(root)) throw DataError("corpus root " + root.string() + " is not a directory");
  std::vector<CorpusEntry> entries;
  std::vector<std::string> identities;
  for (const auto& id_dir : sorted_children(root, true)) {
    const int id = static_cast<int>(identities.size());
    identities.push_back(id_dir.filename().string());
    for (const auto& affect_dir : sorted_children(id_dir, true)) {
      const std::string name = affect_dir.filename().string();
      const auto pos = std::find(affect_names.begin(), affect_names.end(), name);
      if (pos == affect_names.end())
        throw DataError("unknown affect directory '" + name + "' under identity '" +
                        identities.back() + "'");
      const int affect = static_cast<int>(pos - affect_names.begin());
      for (const auto& file : sorted_children(affect_dir, false))
        if (has_image_extension(file)) entries.push_back({id, affect, file});
    }
  }
  if (identities.empty()) throw DataError("no identities found under " + root.string());
  CorpusIndex index(std::move(entries), std::move(identities), affect_names);
  if (const auto holes = index.holes(); !holes.empty()) {
    std::string msg = "corpus is missing affect cells:";
    for (const auto& h : holes) msg += " " + h;
    throw DataError(msg);
  }
  return index;
}

/// Stratified split: each (identity, affect) cell contributes
/// round(val_fraction * n) images to validation, clamped so both sides keep
/// at least one.
inline std::pair<CorpusIndex, CorpusIndex> split(const CorpusIndex& index, double val_fraction,
                                                 std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie strictly between 0 and 1");
  Rng rng(seed);
  std::vector<bool> in_val(index.size(), false);
  for (int id = 0; id < index.identity_count(); ++id) {
    for (int a = 0; a < static_cast<int>(kAffectCount); ++a) {
      const auto cell = index.cell(id, a);
      if (cell.size() < 2)
        throw DataError("cell " + index.identity_names()[id] + "/" + index.affect_names()[a] +
                        " has fewer than 2 images and cannot be stratified");
      std::vector<std::size_t> order(cell.begin(), cell.end());
      for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
      const auto wanted = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(order.size())));
      const std::size_t n_val = std::clamp<std::size_t>(wanted, 1, order.size() - 1);
      for (std::size_t i = 0; i < n_val; ++i) in_val[order[i]] = true;
    }
  }
  std::vector<CorpusEntry> train, val;
  for (std::size_t i = 0; i < index.size(); ++i) (in_val[i] ? val : train).push_back(index[i]);
  return {CorpusIndex(std::move(train), index.identity_names(), index.affect_names()),
          CorpusIndex(std::move(val), index.identity_names(), index.affect_names())};
}

// ---------------------------------------------------------------------------
// Decoding and preprocessing.

/// Decoded 8-bit image in RGB channel order.
using RawImage = cv::Mat;

inline RawImage to_rgb(const cv::Mat& bgr_like) {
  cv::Mat rgb;
  switch (bgr_like.channels()) {
    case 1: cv::cvtColor(bgr_like, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(bgr_like, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(bgr_like, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw DataError("unsupported channel count " + std::to_string(bgr_like.channels()));
  }
  return rgb;
}

inline RawImage decode_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError("cannot decode image " + path.string());
  if (m.depth() != CV_8U) m.convertTo(m, CV_8U);
  return to_rgb(m);
}

inline RawImage decode_image(std::span<const unsigned char> bytes) {
  const cv::Mat buffer(1, static_cast<int>(bytes.size()), CV_8UC1,
                       const_cast<unsigned char*>(bytes.data()));
  cv::Mat m = bytes.empty() ? cv::Mat() : cv::imdecode(buffer, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError("cannot decode image bytes");
  if (m.depth() != CV_8U) m.convertTo(m, CV_8U);
  return to_rgb(m);
}

/// Augmentation applied before normalization: a random crop keeping a
/// uniform fraction in [crop_min_fraction, 1] of each side, and additive
/// uniform noise of +-noise_amplitude grey levels.
struct JitterConfig {
  bool enabled = true;
  double crop_min_fraction = 0.9;
  double noise_amplitude = 4.0;

  static JitterConfig disabled() { return {false, 1.0, 0.0}; }

  void validate() const {
    if (!(crop_min_fraction > 0.0 && crop_min_fraction <= 1.0))
      throw ConfigError("crop_min_fraction must lie in (0, 1]");
    if (!(noise_amplitude >= 0.0)) throw ConfigError("jitter amplitude must be >= 0");
  }
};

/// crop -> resize -> jitter -> x / 127.5 - 1 clipped to [-1, 1].
inline ImageTensor preprocess(const RawImage& raw, std::size_t image_size,
                              const JitterConfig& jitter, Rng& rng) {
  if (raw.empty() || raw.depth() != CV_8U) throw DataError("preprocess: expected an 8-bit image");
  cv::Mat rgb = raw;
  if (raw.channels() == 1)
    cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB);
  else if (raw.channels() != 3)
    throw DataError("preprocess: expected 1 or 3 channels");

  cv::Mat region = rgb;
  if (jitter.enabled && jitter.crop_min_fraction < 1.0) {
    const double f = rng.uniform(jitter.crop_min_fraction, 1.0);
    const int ch = std::max(1, static_cast<int>(std::lround(f * rgb.rows)));
    const int cw = std::max(1, static_cast<int>(std::lround(f * rgb.cols)));
    const int y0 = static_cast<int>(rng.index(static_cast<std::size_t>(rgb.rows - ch + 1)));
    const int x0 = static_cast<int>(rng.index(static_cast<std::size_t>(rgb.cols - cw + 1)));
    region = rgb(cv::Rect(x0, y0, cw, ch));
  }

  const int s = static_cast<int>(image_size);
  cv::Mat resized;
  if (region.rows == s && region.cols == s) {
    resized = region;
  } else {
    const bool shrinking = region.rows > s || region.cols > s;
    cv::resize(region, resized, cv::Size(s, s), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  }

  ImageTensor out({image_size, image_size, 3});
  const bool noisy = jitter.enabled && jitter.noise_amplitude > 0.0;
  std::size_t i = 0;
  for (int y = 0; y < s; ++y) {
    const auto* row = resized.ptr<unsigned char>(y);
    for (int x = 0; x < s * 3; ++x, ++i) {
      double v = row[x];
      if (noisy) v += rng.uniform(-jitter.noise_amplitude, jitter.noise_amplitude);
      out[i] = static_cast<float>(std::clamp(v / 127.5 - 1.0, -1.0, 1.0));
    }
  }
  return out;
}

/// Decoded-image cache bounded by a byte budget; beyond it images are
/// decoded on every request.
class ImageCache {
 public:
  explicit ImageCache(std::size_t max_bytes = std::size_t{512} << 20) : max_bytes_(max_bytes) {}

  RawImage get(const fs::path& path) {
    if (auto it = images_.find(path.string()); it != images_.end()) return it->second;
    RawImage img = decode_image(path);
    const std::size_t bytes = img.total() * img.elemSize();
    if (used_ + bytes <= max_bytes_) {
      used_ += bytes;
      images_.emplace(path.string(), img);
    }
    return img;
  }

 private:
  std::size_t max_bytes_;
  std::size_t used_ = 0;
  std::map<std::string, RawImage> images_;
};

// ---------------------------------------------------------------------------
// Pairing and batching.

struct TrainingExample {
  ImageTensor source;
  AffectVector source_affect{};
  ImageTensor target;
  AffectVector target_affect{};
  int identity = 0;
  int source_label = 0;
  int target_label = 0;
};

/// Uniform draw among entries sharing the source identity and having the
/// desired affect.
inline const CorpusEntry& pair_target(const CorpusEntry& source, int desired_affect,
                                      const CorpusIndex& index, Rng& rng) {
  const auto cell = index.cell(source.identity, desired_affect);
  if (cell.empty())
    throw DataError("no '" + index.affect_names()[desired_affect] + "' image for identity " +
                    index.identity_names()[source.identity]);
  return index[cell[rng.index(cell.size())]];
}

struct BatchOptions {
  std::size_t batch_size = 32;
  std::size_t image_size = 64;
  double sigma_a = 0.05;
  JitterConfig jitter;
};

inline std::vector<TrainingExample> make_batch(const CorpusIndex& train, const BatchOptions& opt,
                                               Rng& rng, ImageCache& cache) {
  if (opt.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (train.empty()) throw DataError("make_batch: empty training index");
  std::vector<TrainingExample> batch;
  batch.reserve(opt.batch_size);
  for (std::size_t b = 0; b < opt.batch_size; ++b) {
    const CorpusEntry& src = train[rng.index(train.size())];
    const int desired = static_cast<int>(rng.index(kAffectCount));
    const CorpusEntry& tgt = pair_target(src, desired, train, rng);
    TrainingExample ex;
    ex.source = preprocess(cache.get(src.path), opt.image_size, opt.jitter, rng);
    ex.target = preprocess(cache.get(tgt.path), opt.image_size, opt.jitter, rng);
    ex.source_affect = one_hot(src.affect);
    ex.target_affect = sample_affect_vector(desired, opt.sigma_a, rng);
    ex.identity = src.identity;
    ex.source_label = src.affect;
    ex.target_label = tgt.affect;
    batch.push_back(std::move(ex));
  }
  return batch;
}

}  // namespace fexgan
