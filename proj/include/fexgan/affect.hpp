// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "fexgan/error.hpp"
#include "fexgan/rng.hpp"

namespace fexgan {

inline constexpr std::size_t kAffectCount = 7;

/// Real-valued condition vector, one entry per affect class.
using AffectVector = std::array<double, kAffectCount>;

/// Ordered class names; the position of a name is its one-hot index.
using AffectNames = std::array<std::string, kAffectCount>;

inline AffectNames default_affect_names() {
  return {"joy", "sadness", "anger", "fear", "disgust", "surprise", "neutral"};
}

/// Largest perturbation std for which the argmax of a sampled vector stays
/// on the requested class with overwhelming probability (~4 sigma).
inline constexpr double kSafeAffectSigma = 0.15;

inline void check_affect_id(int class_id) {
  if (class_id < 0 || class_id >= static_cast<int>(kAffectCount))
    throw Error("affect id " + std::to_string(class_id) + " outside [0, 7)");
}

inline AffectVector one_hot(int class_id) {
  check_affect_id(class_id);
  AffectVector v{};
  v[static_cast<std::size_t>(class_id)] = 1.0;
  return v;
}

inline int argmax(const AffectVector& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// One-hot of `class_id` plus i.i.d. N(0, sigma^2) noise on every entry.
inline AffectVector sample_affect_vector(int class_id, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error("sample_affect_vector: sigma must be >= 0");
  AffectVector v = one_hot(class_id);
  if (sigma == 0.0) return v;
  for (double& x : v) x += sigma * rng.normal();
  return v;
}

inline int affect_index(const AffectNames& names, std::string_view name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw ConfigError("unknown affect '" + std::string(name) + "'");
}

inline bool is_finite(const AffectVector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace fexgan
