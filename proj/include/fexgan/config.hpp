// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration: flat `key = value` pairs grouped in [sections].
// Lines starting with '#' or ';' are comments. Every key is validated and
// unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fexgan/affect.hpp"
#include "fexgan/error.hpp"
#include "fexgan/trainer.hpp"

namespace fexgan {

inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr const char* kSeedEnvVar = "FEXGAN_SEED";

struct RunConfig {
  TrainConfig train;
  std::filesystem::path corpus_root;
  std::filesystem::path output_dir = "outputs";
  std::uint64_t seed = kDefaultSeed;

  // Inference defaults; CLI flags override.
  std::size_t sample_count = 16;
  std::string sample_affect = "joy";
  std::string reference_affect = "neutral";
  double mix_weight_a = 1.0;
  double mix_weight_b = 1.0;
  bool sampled_epsilon = false;

  void validate() const {
    train.validate();
    if (sample_count == 0) throw ConfigError("inference.count must be >= 1");
    affect_index(train.affect_names, sample_affect);
    affect_index(train.affect_names, reference_affect);
    if (!(mix_weight_a > 0.0) || !(mix_weight_b >= 0.0))
      throw ConfigError("inference mix weights must be positive");
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("'" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + text + "'");
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// Seeds as written by the user before falling back to defaults.
struct SeedSettings {
  std::optional<std::uint64_t> base, data, init, noise;
};

struct Setter {
  std::function<void(RunConfig&, SeedSettings&, const std::string&)> apply;
};

inline const std::map<std::string, Setter>& setters() {
  using C = RunConfig;
  using S = SeedSettings;
  using V = const std::string&;
  static const std::map<std::string, Setter> table = {
      {"paths.corpus_root", {[](C& c, S&, V v) { c.corpus_root = v; }}},
      {"paths.checkpoint_dir", {[](C& c, S&, V v) { c.train.checkpoint_dir = v; }}},
      {"paths.output_dir", {[](C& c, S&, V v) { c.output_dir = v; }}},
      {"paths.metrics_path", {[](C& c, S&, V v) { c.train.metrics_path = v; }}},

      {"dataset.image_size", {[](C& c, S&, V v) { c.train.model.image_size = parse_number<std::size_t>("image_size", v); }}},
      {"dataset.val_fraction", {[](C& c, S&, V v) { c.train.val_fraction = parse_number<double>("val_fraction", v); }}},
      {"dataset.sigma_a", {[](C& c, S&, V v) { c.train.sigma_a = parse_number<double>("sigma_a", v); }}},
      {"dataset.jitter", {[](C& c, S&, V v) { c.train.jitter.enabled = parse_bool("jitter", v); }}},
      {"dataset.crop_min_fraction", {[](C& c, S&, V v) { c.train.jitter.crop_min_fraction = parse_number<double>("crop_min_fraction", v); }}},
      {"dataset.jitter_amplitude", {[](C& c, S&, V v) { c.train.jitter.noise_amplitude = parse_number<double>("jitter_amplitude", v); }}},
      {"dataset.cache_megabytes", {[](C& c, S&, V v) { c.train.cache_megabytes = parse_number<std::size_t>("cache_megabytes", v); }}},
      {"dataset.affect_names", {[](C& c, S&, V v) {
         AffectNames names;
         std::stringstream ss(v);
         std::string item;
         std::size_t i = 0;
         while (std::getline(ss, item, ',')) {
           if (i == kAffectCount) throw ConfigError("affect_names must list exactly 7 names");
           names[i++] = trim(item);
         }
         if (i != kAffectCount) throw ConfigError("affect_names must list exactly 7 names");
         c.train.affect_names = names;
       }}},

      {"network.latent_dim", {[](C& c, S&, V v) { c.train.model.latent_dim = parse_number<std::size_t>("latent_dim", v); }}},
      {"network.base_features", {[](C& c, S&, V v) { c.train.model.base_features = parse_number<std::size_t>("base_features", v); }}},
      {"network.max_features", {[](C& c, S&, V v) { c.train.model.max_features = parse_number<std::size_t>("max_features", v); }}},
      {"network.disc_base_features", {[](C& c, S&, V v) { c.train.model.disc_base_features = parse_number<std::size_t>("disc_base_features", v); }}},
      {"network.disc_dense_units", {[](C& c, S&, V v) { c.train.model.disc_dense_units = parse_number<std::size_t>("disc_dense_units", v); }}},
      {"network.negative_slope", {[](C& c, S&, V v) { c.train.model.negative_slope = parse_number<double>("negative_slope", v); }}},

      {"train.seed", {[](C&, S& s, V v) { s.base = parse_number<std::uint64_t>("seed", v); }}},
      {"train.data_seed", {[](C&, S& s, V v) { s.data = parse_number<std::uint64_t>("data_seed", v); }}},
      {"train.init_seed", {[](C&, S& s, V v) { s.init = parse_number<std::uint64_t>("init_seed", v); }}},
      {"train.noise_seed", {[](C&, S& s, V v) { s.noise = parse_number<std::uint64_t>("noise_seed", v); }}},
      {"train.learning_rate", {[](C& c, S&, V v) { c.train.adam.learning_rate = parse_number<double>("learning_rate", v); }}},
      {"train.adam_beta1", {[](C& c, S&, V v) { c.train.adam.beta1 = parse_number<double>("adam_beta1", v); }}},
      {"train.adam_beta2", {[](C& c, S&, V v) { c.train.adam.beta2 = parse_number<double>("adam_beta2", v); }}},
      {"train.adam_epsilon", {[](C& c, S&, V v) { c.train.adam.epsilon = parse_number<double>("adam_epsilon", v); }}},
      {"train.batch_size", {[](C& c, S&, V v) { c.train.batch_size = parse_number<std::size_t>("batch_size", v); }}},
      {"train.epochs", {[](C& c, S&, V v) { c.train.epochs = parse_number<int>("epochs", v); }}},
      {"train.eval_every", {[](C& c, S&, V v) { c.train.eval_every = parse_number<int>("eval_every", v); }}},
      {"train.alpha", {[](C& c, S&, V v) { c.train.weights.alpha = parse_number<double>("alpha", v); }}},
      {"train.beta", {[](C& c, S&, V v) { c.train.weights.beta = parse_number<double>("beta", v); }}},
      {"train.gamma", {[](C& c, S&, V v) { c.train.weights.gamma = parse_number<double>("gamma", v); }}},
      {"train.alpha_after_schedule", {[](C& c, S&, V v) { c.train.weights.alpha_after_schedule = parse_number<double>("alpha_after_schedule", v); }}},
      {"train.schedule_epoch", {[](C& c, S&, V v) { c.train.weights.schedule_epoch = parse_number<int>("schedule_epoch", v); }}},
      {"train.keep_last", {[](C& c, S&, V v) { c.train.keep_last = parse_number<int>("keep_last", v); }}},

      {"inference.count", {[](C& c, S&, V v) { c.sample_count = parse_number<std::size_t>("count", v); }}},
      {"inference.affect", {[](C& c, S&, V v) { c.sample_affect = v; }}},
      {"inference.reference_affect", {[](C& c, S&, V v) { c.reference_affect = v; }}},
      {"inference.weight_a", {[](C& c, S&, V v) { c.mix_weight_a = parse_number<double>("weight_a", v); }}},
      {"inference.weight_b", {[](C& c, S&, V v) { c.mix_weight_b = parse_number<double>("weight_b", v); }}},
      {"inference.sampled_epsilon", {[](C& c, S&, V v) { c.sampled_epsilon = parse_bool("sampled_epsilon", v); }}},
  };
  return table;
}

}  // namespace config_detail

/// Ordered (section.key, value) pairs read from INI text.
inline std::vector<std::pair<std::string, std::string>> parse_ini(std::istream& is,
                                                                  const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  std::string section;
  int lineno = 0;
  for (std::string raw; std::getline(is, raw);) {
    ++lineno;
    const std::string line = config_detail::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = config_detail::trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    if (section.empty()) throw ConfigError(where + ": key outside any [section]");
    const std::string key = section + "." + config_detail::trim(std::string_view(line).substr(0, eq));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh)
      throw ConfigError(where + ": duplicate key '" + key + "' (first on line " +
                        std::to_string(it->second) + ")");
    out.emplace_back(key, config_detail::trim(std::string_view(line).substr(eq + 1)));
  }
  return out;
}

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

/// Resolution order for seeds: --seed, then the file's seed keys, then the
/// FEXGAN_SEED environment variable, then 42. Sub-seeds not given
/// explicitly derive from the base as (base, base + 1, base + 2).
inline RunConfig load_run_config(std::istream& is, const std::string& origin,
                                 const ConfigOverrides& overrides = {}) {
  RunConfig cfg;
  config_detail::SeedSettings seeds;
  const auto& table = config_detail::setters();
  for (const auto& [key, value] : parse_ini(is, origin)) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError(origin + ": unknown key '" + key + "'");
    it->second.apply(cfg, seeds, value);
  }

  std::uint64_t base = kDefaultSeed;
  if (overrides.seed) {
    base = *overrides.seed;
    seeds = {};
  } else if (seeds.base) {
    base = *seeds.base;
  } else if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
    base = config_detail::parse_number<std::uint64_t>(kSeedEnvVar, env);
  }
  cfg.seed = base;
  const Seeds derived = Seeds::from(base);
  cfg.train.seeds = {seeds.data.value_or(derived.data), seeds.init.value_or(derived.init),
                     seeds.noise.value_or(derived.noise)};
  if (overrides.epochs) cfg.train.epochs = *overrides.epochs;
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 const ConfigOverrides& overrides = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  return load_run_config(is, path.string(), overrides);
}

/// Fully resolved configuration in the same format `load_run_config` reads.
inline std::string to_ini(const RunConfig& c) {
  using config_detail::format_double;
  const auto& t = c.train;
  std::ostringstream os;
  os << "[paths]\n"
     << "corpus_root = " << c.corpus_root.string() << "\n"
     << "checkpoint_dir = " << t.checkpoint_dir.string() << "\n"
     << "output_dir = " << c.output_dir.string() << "\n"
     << "metrics_path = " << t.metrics_file().string() << "\n\n";
  std::string names;
  for (std::size_t i = 0; i < kAffectCount; ++i) names += (i ? "," : "") + t.affect_names[i];
  os << "[dataset]\n"
     << "image_size = " << t.model.image_size << "\n"
     << "val_fraction = " << format_double(t.val_fraction) << "\n"
     << "sigma_a = " << format_double(t.sigma_a) << "\n"
     << "jitter = " << (t.jitter.enabled ? "true" : "false") << "\n"
     << "crop_min_fraction = " << format_double(t.jitter.crop_min_fraction) << "\n"
     << "jitter_amplitude = " << format_double(t.jitter.noise_amplitude) << "\n"
     << "cache_megabytes = " << t.cache_megabytes << "\n"
     << "affect_names = " << names << "\n\n";
  os << "[network]\n"
     << "latent_dim = " << t.model.latent_dim << "\n"
     << "base_features = " << t.model.base_features << "\n"
     << "max_features = " << t.model.max_features << "\n"
     << "disc_base_features = " << t.model.disc_base_features << "\n"
     << "disc_dense_units = " << t.model.disc_dense_units << "\n"
     << "negative_slope = " << format_double(t.model.negative_slope) << "\n\n";
  os << "[train]\n"
     << "seed = " << c.seed << "\n"
     << "data_seed = " << t.seeds.data << "\n"
     << "init_seed = " << t.seeds.init << "\n"
     << "noise_seed = " << t.seeds.noise << "\n"
     << "learning_rate = " << format_double(t.adam.learning_rate) << "\n"
     << "adam_beta1 = " << format_double(t.adam.beta1) << "\n"
     << "adam_beta2 = " << format_double(t.adam.beta2) << "\n"
     << "adam_epsilon = " << format_double(t.adam.epsilon) << "\n"
     << "batch_size = " << t.batch_size << "\n"
     << "epochs = " << t.epochs << "\n"
     << "eval_every = " << t.eval_every << "\n"
     << "alpha = " << format_double(t.weights.alpha) << "\n"
     << "beta = " << format_double(t.weights.beta) << "\n"
     << "gamma = " << format_double(t.weights.gamma) << "\n"
     << "alpha_after_schedule = " << format_double(t.weights.alpha_after_schedule) << "\n"
     << "schedule_epoch = " << t.weights.schedule_epoch << "\n"
     << "keep_last = " << t.keep_last << "\n\n";
  os << "[inference]\n"
     << "count = " << c.sample_count << "\n"
     << "affect = " << c.sample_affect << "\n"
     << "reference_affect = " << c.reference_affect << "\n"
     << "weight_a = " << format_double(c.mix_weight_a) << "\n"
     << "weight_b = " << format_double(c.mix_weight_b) << "\n"
     << "sampled_epsilon = " << (c.sampled_epsilon ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace fexgan
