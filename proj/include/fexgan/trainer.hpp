// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fexgan/blob.hpp"
#include "fexgan/dataset.hpp"
#include "fexgan/losses.hpp"
#include "fexgan/model.hpp"
#include "fexgan/optimizer.hpp"

namespace fexgan {

struct Seeds {
  std::uint64_t data = 42;
  std::uint64_t init = 43;
  std::uint64_t noise = 44;

  static Seeds from(std::uint64_t base) { return {base, base + 1, base + 2}; }
};

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  LossWeights weights;
  Seeds seeds;
  std::size_t batch_size = 32;
  int epochs = 100;
  int eval_every = 1;
  double val_fraction = 0.2;
  double sigma_a = 0.05;
  JitterConfig jitter;
  AffectNames affect_names = default_affect_names();
  std::size_t cache_megabytes = 512;
  int keep_last = 0;  // 0 keeps every checkpoint
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path metrics_path;  // empty: <checkpoint_dir>/metrics.jsonl

  std::filesystem::path metrics_file() const {
    return metrics_path.empty() ? checkpoint_dir / "metrics.jsonl" : metrics_path;
  }

  BatchOptions batch_options() const { return {batch_size, model.image_size, sigma_a, jitter}; }

  void validate() const {
    model.validate();
    adam.validate();
    weights.validate();
    jitter.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in (0, 1)");
    if (!(sigma_a >= 0)) throw ConfigError("sigma_a must be >= 0");
    if (keep_last < 0) throw ConfigError("keep_last must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Records.

struct AccuracyRecord {
  double real_binary = 0.0;
  double real_multi = 0.0;
  double fake_binary = 0.0;
  double fake_multi = 0.0;
  std::size_t images = 0;
};

struct StepStats {
  GeneratorLossBreakdown gen;
  DiscriminatorLossBreakdown disc;
};

/// One line of the metrics log: validation accuracies after `epoch`
/// (zero-based) plus that epoch's mean training losses.
struct MetricsRecord {
  int epoch = 0;
  std::string split = "val";
  AccuracyRecord accuracy;
  GeneratorLossBreakdown gen;
  DiscriminatorLossBreakdown disc;
};

inline nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["images"] = r.accuracy.images;
  j["real_binary_acc"] = r.accuracy.real_binary;
  j["real_multi_acc"] = r.accuracy.real_multi;
  j["fake_binary_acc"] = r.accuracy.fake_binary;
  j["fake_multi_acc"] = r.accuracy.fake_multi;
  j["effective_alpha"] = r.gen.effective_alpha;
  j["gen_loss"] = {{"gan", r.gen.gan},
                   {"kl", r.gen.kl},
                   {"reconstruction", r.gen.reconstruction},
                   {"total", r.gen.total}};
  j["disc_loss"] = {{"real", r.disc.real_loss}, {"fake", r.disc.fake_loss}, {"total", r.disc.total}};
  return j;
}

inline MetricsRecord metrics_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  r.epoch = j.at("epoch").get<int>();
  r.split = j.at("split").get<std::string>();
  r.accuracy.images = j.at("images").get<std::size_t>();
  r.accuracy.real_binary = j.at("real_binary_acc").get<double>();
  r.accuracy.real_multi = j.at("real_multi_acc").get<double>();
  r.accuracy.fake_binary = j.at("fake_binary_acc").get<double>();
  r.accuracy.fake_multi = j.at("fake_multi_acc").get<double>();
  r.gen.effective_alpha = j.at("effective_alpha").get<double>();
  const auto& g = j.at("gen_loss");
  r.gen.gan = g.at("gan");
  r.gen.kl = g.at("kl");
  r.gen.reconstruction = g.at("reconstruction");
  r.gen.total = g.at("total");
  const auto& d = j.at("disc_loss");
  r.disc.real_loss = d.at("real");
  r.disc.fake_loss = d.at("fake");
  r.disc.total = d.at("total");
  return r;
}

inline std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read metrics log " + path.string());
  std::vector<MetricsRecord> out;
  for (std::string line; std::getline(is, line);)
    if (!line.empty()) out.push_back(metrics_from_json(nlohmann::json::parse(line)));
  return out;
}

// ---------------------------------------------------------------------------
// Training state and the alternating update.

/// Everything that evolves during optimization. Pinned in memory because the
/// optimizers hold pointers into the model.
class TrainingState {
 public:
  explicit TrainingState(const TrainConfig& cfg)
      : model(cfg.model, cfg.seeds.init),
        generator_opt(model.generator.parameters(), cfg.adam),
        discriminator_opt(model.discriminator.parameters(), cfg.adam),
        data_rng(cfg.seeds.data),
        noise_rng(cfg.seeds.noise) {}

  TrainingState(const TrainingState&) = delete;
  TrainingState& operator=(const TrainingState&) = delete;

  GanModel model;
  Adam<float> generator_opt;
  Adam<float> discriminator_opt;
  Rng data_rng;
  Rng noise_rng;
  int epochs_completed = 0;
  std::size_t metrics_lines = 0;
};

inline bool finite(double v) { return std::isfinite(v); }

/// One alternating update: discriminator on real sources and detached fakes,
/// then generator through the freshly updated discriminator.
inline StepStats train_step(TrainingState& state, std::span<const TrainingExample> batch,
                            const TrainConfig& cfg, int epoch) {
  if (batch.empty()) throw Error("train_step: empty batch");
  GanModel& m = state.model;
  std::vector<ImageTensor> sources, targets;
  std::vector<AffectVector> source_affects, target_affects;
  for (const auto& ex : batch) {
    sources.push_back(ex.source);
    targets.push_back(ex.target);
    source_affects.push_back(ex.source_affect);
    target_affects.push_back(ex.target_affect);
  }
  const Tensor<float> src = stack<float>(sources);
  const Tensor<float> tgt = stack<float>(targets);
  const Tensor<float> src_aff = affects_to_tensor<float>(source_affects);
  const Tensor<float> tgt_aff = affects_to_tensor<float>(target_affects);

  Generator<float>::Trace gen_trace;
  const auto gen = m.generator.forward(src, src_aff, tgt_aff, state.noise_rng, Mode::train, &gen_trace);

  StepStats stats;
  {
    state.discriminator_opt.zero_grad();
    Discriminator<float>::Trace real_trace, fake_trace;
    const auto on_real = m.discriminator.forward(src, Mode::train, &real_trace);
    const auto on_fake = m.discriminator.forward(gen.generated, Mode::train, &fake_trace);
    const auto real_loss = adversarial_batch_loss<float>(1.0f, on_real, source_affects);
    const auto fake_loss = adversarial_batch_loss<float>(0.0f, on_fake, target_affects);
    stats.disc = discriminator_total_loss(real_loss.value, fake_loss.value);
    if (!finite(stats.disc.total))
      throw TrainingDiverged("non-finite discriminator loss at epoch " + std::to_string(epoch));
    m.discriminator.backward(real_trace, real_loss.d_realness_logit, real_loss.d_class_logits,
                             {.params = true, .input = false});
    m.discriminator.backward(fake_trace, fake_loss.d_realness_logit, fake_loss.d_class_logits,
                             {.params = true, .input = false});
    state.discriminator_opt.step();
  }
  {
    state.generator_opt.zero_grad();
    const double alpha = apply_weight_schedule(cfg.weights, epoch);
    Discriminator<float>::Trace trace;
    // Batch statistics only: the generator update must leave discriminator
    // state untouched.
    const auto judged = m.discriminator.forward(gen.generated, Mode::train, &trace, false);
    const auto gan = adversarial_batch_loss<float>(1.0f, judged, target_affects, alpha);
    const auto kl = kl_batch_loss(gen.latent.mu, gen.latent.log_var, cfg.weights.beta);
    const double recon = reconstruction_loss(gen.generated, tgt);
    stats.gen = generator_total_loss(gan.value, kl.value, recon, cfg.weights, epoch);
    if (!finite(stats.gen.total))
      throw TrainingDiverged("non-finite generator loss at epoch " + std::to_string(epoch));

    Tensor<float> d_img = m.discriminator.backward(trace, gan.d_realness_logit, gan.d_class_logits,
                                                   {.params = false, .input = true});
    const Tensor<float> d_recon = reconstruction_loss_grad(gen.generated, tgt, cfg.weights.gamma);
    for (std::size_t i = 0; i < d_img.size(); ++i) d_img[i] += d_recon[i];
    m.generator.backward(gen_trace, d_img, kl.d_mu, kl.d_log_var);
    state.generator_opt.step();
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Evaluation.

/// Discriminator accuracies in eval mode. Fakes are generated from every
/// image with a uniformly drawn hard target affect and epsilon = 0.
inline AccuracyRecord evaluate_accuracy(GanModel& m, const CorpusIndex& index,
                                        std::size_t batch_size, std::uint64_t seed,
                                        ImageCache& cache) {
  if (index.empty()) throw DataError("evaluate_accuracy: empty index");
  Rng rng(seed);
  const auto no_jitter = JitterConfig::disabled();
  AccuracyRecord acc;
  std::size_t real_bin = 0, real_multi = 0, fake_bin = 0, fake_multi = 0;
  for (std::size_t start = 0; start < index.size(); start += batch_size) {
    const std::size_t end = std::min(index.size(), start + batch_size);
    std::vector<ImageTensor> images;
    std::vector<AffectVector> src_aff, tgt_aff;
    std::vector<int> src_labels, tgt_labels;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(preprocess(cache.get(index[i].path), m.config.image_size, no_jitter, rng));
      src_aff.push_back(one_hot(index[i].affect));
      src_labels.push_back(index[i].affect);
      const int t = static_cast<int>(rng.index(kAffectCount));
      tgt_aff.push_back(one_hot(t));
      tgt_labels.push_back(t);
    }
    const std::size_t n = images.size();
    const Tensor<float> x = stack<float>(images);
    const auto real = m.discriminator.forward(x, Mode::eval);
    const Tensor<float> zeros({n, m.config.latent_dim});
    const auto fake_images = m.generator
                                 .forward(x, affects_to_tensor<float>(src_aff),
                                          affects_to_tensor<float>(tgt_aff), zeros, Mode::eval)
                                 .generated;
    const auto fake = m.discriminator.forward(fake_images, Mode::eval);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = real.at(i);
      const auto f = fake.at(i);
      real_bin += r.realness > 0.5f;
      fake_bin += f.realness <= 0.5f;
      const auto arg = [](const std::array<float, kAffectCount>& p) {
        return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
      };
      real_multi += arg(r.class_probs) == src_labels[i];
      fake_multi += arg(f.class_probs) == tgt_labels[i];
    }
  }
  const double total = static_cast<double>(index.size());
  acc.images = index.size();
  acc.real_binary = static_cast<double>(real_bin) / total;
  acc.real_multi = static_cast<double>(real_multi) / total;
  acc.fake_binary = static_cast<double>(fake_bin) / total;
  acc.fake_multi = static_cast<double>(fake_multi) / total;
  return acc;
}

inline std::uint64_t evaluation_seed(const Seeds& seeds, int epoch) {
  return Rng::derive(seeds.noise, 1'000'000ULL + static_cast<std::uint64_t>(epoch));
}

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/manifest.json plus one blob per parameter group.

inline nlohmann::ordered_json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = c.model;
  j["adam"] = {{"learning_rate", c.adam.learning_rate},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"epsilon", c.adam.epsilon}};
  j["loss_weights"] = {{"alpha", c.weights.alpha},
                       {"beta", c.weights.beta},
                       {"gamma", c.weights.gamma},
                       {"alpha_after_schedule", c.weights.alpha_after_schedule},
                       {"schedule_epoch", c.weights.schedule_epoch}};
  j["seeds"] = {{"data", c.seeds.data}, {"init", c.seeds.init}, {"noise", c.seeds.noise}};
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["eval_every"] = c.eval_every;
  j["val_fraction"] = c.val_fraction;
  j["sigma_a"] = c.sigma_a;
  j["jitter"] = {{"enabled", c.jitter.enabled},
                 {"crop_min_fraction", c.jitter.crop_min_fraction},
                 {"noise_amplitude", c.jitter.noise_amplitude}};
  j["affect_names"] = c.affect_names;
  return j;
}

inline const char* kManifestName = "manifest.json";
inline const char* kLatestName = "LATEST";

struct CheckpointInfo {
  std::filesystem::path dir;
  int epochs_completed = 0;
  ModelConfig model;
  Seeds seeds;
  nlohmann::json manifest;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& root, int epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d", epoch);
  return root / name;
}

inline void save_checkpoint(const std::filesystem::path& dir, TrainingState& s,
                            const TrainConfig& cfg) {
  std::filesystem::create_directories(dir);
  write_blob(dir / "encoder.bin", s.model.generator.encoder().state());
  write_blob(dir / "decoder.bin", s.model.generator.decoder().state());
  write_blob(dir / "discriminator.bin", s.model.discriminator.state());
  write_blob(dir / "generator_adam.bin", s.generator_opt.state());
  write_blob(dir / "discriminator_adam.bin", s.discriminator_opt.state());

  nlohmann::ordered_json j;
  j["format"] = "fexgan-checkpoint";
  j["version"] = 1;
  j["epochs_completed"] = s.epochs_completed;
  j["effective_alpha"] = apply_weight_schedule(cfg.weights, s.epochs_completed);
  j["config"] = config_to_json(cfg);
  j["optimizer_steps"] = {{"generator", s.generator_opt.steps()},
                          {"discriminator", s.discriminator_opt.steps()}};
  j["rng"] = {{"data", s.data_rng.save_state()}, {"noise", s.noise_rng.save_state()}};
  j["metrics_lines"] = s.metrics_lines;
  j["blobs"] = {{"encoder", "encoder.bin"},
                {"decoder", "decoder.bin"},
                {"discriminator", "discriminator.bin"},
                {"generator_adam", "generator_adam.bin"},
                {"discriminator_adam", "discriminator_adam.bin"}};
  std::ofstream os(dir / kManifestName, std::ios::trunc);
  os << j.dump(2) << '\n';
  if (!os) throw Error("cannot write manifest in " + dir.string());
}

inline CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) {
  std::ifstream is(dir / kManifestName);
  if (!is) throw DataError("no checkpoint manifest in " + dir.string());
  CheckpointInfo info;
  info.dir = dir;
  info.manifest = nlohmann::json::parse(is);
  if (info.manifest.value("format", "") != "fexgan-checkpoint")
    throw DataError(dir.string() + " is not a fexgan checkpoint");
  info.epochs_completed = info.manifest.at("epochs_completed").get<int>();
  info.model = info.manifest.at("config").at("model").get<ModelConfig>();
  const auto& seeds = info.manifest.at("config").at("seeds");
  info.seeds = {seeds.at("data"), seeds.at("init"), seeds.at("noise")};
  return info;
}

/// Restores network weights and running statistics only.
inline GanModel load_model(const std::filesystem::path& dir) {
  const auto info = read_checkpoint_info(dir);
  GanModel m(info.model, info.seeds.init);
  read_blob_into(dir / "encoder.bin", m.generator.encoder().state());
  read_blob_into(dir / "decoder.bin", m.generator.decoder().state());
  read_blob_into(dir / "discriminator.bin", m.discriminator.state());
  return m;
}

inline void load_training_state(const std::filesystem::path& dir, TrainingState& s) {
  const auto info = read_checkpoint_info(dir);
  if (!(info.model == s.model.config))
    throw ConfigError("checkpoint " + dir.string() + " was trained with a different model config");
  read_blob_into(dir / "encoder.bin", s.model.generator.encoder().state());
  read_blob_into(dir / "decoder.bin", s.model.generator.decoder().state());
  read_blob_into(dir / "discriminator.bin", s.model.discriminator.state());
  read_blob_into(dir / "generator_adam.bin", s.generator_opt.state());
  read_blob_into(dir / "discriminator_adam.bin", s.discriminator_opt.state());
  const auto& j = info.manifest;
  s.generator_opt.set_steps(j.at("optimizer_steps").at("generator"));
  s.discriminator_opt.set_steps(j.at("optimizer_steps").at("discriminator"));
  s.data_rng.load_state(j.at("rng").at("data"));
  s.noise_rng.load_state(j.at("rng").at("noise"));
  s.epochs_completed = info.epochs_completed;
  s.metrics_lines = j.at("metrics_lines");
}

/// Most recent checkpoint under `root`, if any.
inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& root) {
  std::ifstream is(root / kLatestName);
  std::string name;
  if (!is || !std::getline(is, name) || name.empty()) return std::nullopt;
  const auto dir = root / name;
  if (!std::filesystem::exists(dir / kManifestName)) return std::nullopt;
  return dir;
}

// ---------------------------------------------------------------------------
// The full loop.

struct FitResult {
  std::filesystem::path checkpoint;
  std::vector<MetricsRecord> records;  // produced by this invocation
};

using ProgressFn = std::function<void(const std::string&)>;

namespace trainer_detail {

inline void truncate_lines(const std::filesystem::path& path, std::size_t keep) {
  std::vector<std::string> lines;
  {
    std::ifstream is(path);
    for (std::string line; lines.size() < keep && std::getline(is, line);) lines.push_back(line);
  }
  std::ofstream os(path, std::ios::trunc);
  for (const auto& l : lines) os << l << '\n';
}

inline void prune(const std::filesystem::path& root, int keep_last) {
  if (keep_last <= 0) return;
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string().starts_with("epoch_")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  while (dirs.size() > static_cast<std::size_t>(keep_last)) {
    std::filesystem::remove_all(dirs.front());
    dirs.erase(dirs.begin());
  }
}

inline void write_checkpoint(TrainingState& s, const TrainConfig& cfg) {
  const auto dir = checkpoint_path(cfg.checkpoint_dir, s.epochs_completed);
  save_checkpoint(dir, s, cfg);
  std::ofstream(cfg.checkpoint_dir / kLatestName, std::ios::trunc) << dir.filename().string() << '\n';
  prune(cfg.checkpoint_dir, cfg.keep_last);
}

inline void dump_divergence(const TrainConfig& cfg, int epoch, std::size_t step,
                            const std::string& data_rng_state, const std::string& noise_rng_state,
                            const std::string& what) {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["error"] = what;
  j["batch_data_rng_state"] = data_rng_state;
  j["batch_noise_rng_state"] = noise_rng_state;
  j["config"] = config_to_json(cfg);
  std::ofstream(cfg.checkpoint_dir / "divergence.json", std::ios::trunc) << j.dump(2) << '\n';
}

}  // namespace trainer_detail

/// Trains for cfg.epochs epochs of ceil(|train| / batch_size) steps each.
/// With `resume`, continues from the newest checkpoint in cfg.checkpoint_dir.
inline FitResult fit(const TrainConfig& cfg, const std::filesystem::path& corpus_root,
                     bool resume = false, const ProgressFn& progress = {}) {
  cfg.validate();
  const auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const CorpusIndex corpus = scan_corpus(corpus_root, cfg.affect_names);
  const auto [train, val] = split(corpus, cfg.val_fraction, cfg.seeds.data);
  std::filesystem::create_directories(cfg.checkpoint_dir);
  const auto metrics_file = cfg.metrics_file();

  auto state = std::make_unique<TrainingState>(cfg);
  if (resume) {
    if (const auto latest = latest_checkpoint(cfg.checkpoint_dir)) {
      load_training_state(*latest, *state);
      trainer_detail::truncate_lines(metrics_file, state->metrics_lines);
      say("resumed from " + latest->string());
    } else {
      say("no checkpoint to resume from; starting fresh");
    }
  }
  if (state->epochs_completed == 0) std::ofstream(metrics_file, std::ios::trunc);

  ImageCache cache(cfg.cache_megabytes << 20);
  const BatchOptions batch_opt = cfg.batch_options();
  const std::size_t steps = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  FitResult result;

  for (int epoch = state->epochs_completed; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    GeneratorLossBreakdown gen_mean;
    DiscriminatorLossBreakdown disc_mean;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::string data_state = state->data_rng.save_state();
      const std::string noise_state = state->noise_rng.save_state();
      StepStats st;
      try {
        const auto batch = make_batch(train, batch_opt, state->data_rng, cache);
        st = train_step(*state, batch, cfg, epoch);
      } catch (const TrainingDiverged& e) {
        trainer_detail::dump_divergence(cfg, epoch, step, data_state, noise_state, e.what());
        throw;
      }
      gen_mean.gan += st.gen.gan;
      gen_mean.kl += st.gen.kl;
      gen_mean.reconstruction += st.gen.reconstruction;
      gen_mean.total += st.gen.total;
      disc_mean.real_loss += st.disc.real_loss;
      disc_mean.fake_loss += st.disc.fake_loss;
      disc_mean.total += st.disc.total;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    gen_mean.gan *= inv;
    gen_mean.kl *= inv;
    gen_mean.reconstruction *= inv;
    gen_mean.total *= inv;
    gen_mean.effective_alpha = apply_weight_schedule(cfg.weights, epoch);
    disc_mean.real_loss *= inv;
    disc_mean.fake_loss *= inv;
    disc_mean.total *= inv;
    state->epochs_completed = epoch + 1;

    const bool evaluate_now = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line.precision(4);
    line << "epoch " << epoch << " alpha=" << gen_mean.effective_alpha << " G=" << gen_mean.total
         << " (gan " << gen_mean.gan << ", kl " << gen_mean.kl << ", rec "
         << gen_mean.reconstruction << ") D=" << disc_mean.total << " [" << secs << "s]";
    if (evaluate_now) {
      MetricsRecord rec;
      rec.epoch = epoch;
      rec.accuracy = evaluate_accuracy(state->model, val, cfg.batch_size,
                                       evaluation_seed(cfg.seeds, epoch), cache);
      rec.gen = gen_mean;
      rec.disc = disc_mean;
      {
        std::ofstream os(metrics_file, std::ios::app);
        os << to_json(rec).dump() << '\n';
        if (!os) throw Error("cannot append to " + metrics_file.string());
      }
      ++state->metrics_lines;
      result.records.push_back(rec);
      line << " val real " << rec.accuracy.real_binary << "/" << rec.accuracy.real_multi
           << " fake " << rec.accuracy.fake_binary << "/" << rec.accuracy.fake_multi;
      trainer_detail::write_checkpoint(*state, cfg);
    }
    say(line.str());
  }

  if (auto latest = latest_checkpoint(cfg.checkpoint_dir);
      !latest || latest->filename() != checkpoint_path(cfg.checkpoint_dir, state->epochs_completed).filename()) {
    trainer_detail::write_checkpoint(*state, cfg);
  }
  result.checkpoint = checkpoint_path(cfg.checkpoint_dir, state->epochs_completed);
  return result;
}

}  // namespace fexgan
