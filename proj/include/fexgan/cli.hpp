// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fexgan/config.hpp"
#include "fexgan/inference.hpp"
#include "fexgan/toy_corpus.hpp"
#include "fexgan/trainer.hpp"

namespace fexgan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

namespace cli_detail {

namespace fs = std::filesystem;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct CommonArgs {
  std::string config;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
};

inline RunConfig load(const CommonArgs& a, std::optional<int> epochs = std::nullopt) {
  if (a.config.empty()) throw ConfigError("--config is required");
  return load_run_config(a.config, {a.seed, epochs});
}

inline void echo_config(const RunConfig& cfg, Streams& s) {
  s.out << "# effective configuration\n" << to_ini(cfg) << "# end effective configuration\n";
}

inline fs::path resolve_checkpoint(const RunConfig& cfg, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (auto latest = latest_checkpoint(cfg.train.checkpoint_dir)) return *latest;
  throw DataError("no checkpoint found under " + cfg.train.checkpoint_dir.string());
}

inline std::string checkpoint_id(const fs::path& dir) {
  return fs::weakly_canonical(dir).string();
}

/// First image of `affect` for every identity, used when no reference is given.
inline std::vector<fs::path> default_references(const RunConfig& cfg, int affect) {
  const auto index = scan_corpus(cfg.corpus_root, cfg.train.affect_names);
  std::vector<fs::path> out;
  for (int id = 0; id < index.identity_count(); ++id)
    out.push_back(index[index.cell(id, affect).front()].path);
  return out;
}

inline ImageTensor load_reference(const fs::path& p, std::size_t size) {
  Rng unused(0);
  return preprocess(decode_image(p), size, JitterConfig::disabled(), unused);
}

inline void print_table(const AccuracyRecord& train, const AccuracyRecord& val, Streams& s) {
  const auto row = [&](const char* name, const AccuracyRecord& r) {
    s.out << std::left << std::setw(8) << name << std::right << std::fixed << std::setprecision(3)
          << std::setw(13) << r.real_binary << std::setw(13) << r.real_multi << std::setw(13)
          << r.fake_binary << std::setw(13) << r.fake_multi << std::setw(9) << r.images << "\n";
  };
  s.out << std::left << std::setw(8) << "split" << std::right << std::setw(13) << "real-binary"
        << std::setw(13) << "real-multi" << std::setw(13) << "fake-binary" << std::setw(13)
        << "fake-multi" << std::setw(9) << "images" << "\n";
  row("train", train);
  row("val", val);
}

inline int cmd_toy_data(const fs::path& out, int identities, int per_cell, int image_size,
                        std::optional<std::uint64_t> seed, Streams& s) {
  ToyCorpusOptions opt;
  opt.identities = identities;
  opt.per_cell = per_cell;
  opt.image_size = image_size;
  if (seed) {
    opt.seed = *seed;
  } else if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
    opt.seed = config_detail::parse_number<std::uint64_t>(kSeedEnvVar, env);
  }
  opt.validate();
  s.out << "# effective configuration\n[toy_data]\nout = " << out.string()
        << "\nidentities = " << opt.identities << "\nper_cell = " << opt.per_cell
        << "\nimage_size = " << opt.image_size << "\nseed = " << opt.seed
        << "\n# end effective configuration\n";
  const auto n = generate_toy_corpus(out, opt);
  s.out << "wrote " << n << " images to " << out.string() << "\n";
  return kExitOk;
}

inline int cmd_train(const CommonArgs& a, bool resume, std::optional<int> epochs, Streams& s) {
  const RunConfig cfg = load(a, epochs);
  echo_config(cfg, s);
  if (cfg.corpus_root.empty()) throw ConfigError("paths.corpus_root is required for train");
  if (cfg.train.weights.schedule_epoch > cfg.train.epochs)
    s.err << "warning: schedule_epoch " << cfg.train.weights.schedule_epoch
          << " is beyond the last epoch; alpha stays at " << cfg.train.weights.alpha << "\n";
  const auto result =
      fit(cfg.train, cfg.corpus_root, resume, [&](const std::string& m) { s.out << m << "\n" << std::flush; });
  s.out << "checkpoint: " << result.checkpoint.string() << "\n"
        << "metrics: " << cfg.train.metrics_file().string() << "\n";
  return kExitOk;
}

inline int cmd_evaluate(const CommonArgs& a, Streams& s) {
  const RunConfig cfg = load(a);
  echo_config(cfg, s);
  if (cfg.corpus_root.empty()) throw ConfigError("paths.corpus_root is required for evaluate");
  const auto dir = resolve_checkpoint(cfg, a.checkpoint);
  const auto info = read_checkpoint_info(dir);
  GanModel model = load_model(dir);
  const auto& mc = info.manifest.at("config");
  const double val_fraction = mc.at("val_fraction").get<double>();
  const auto corpus = scan_corpus(cfg.corpus_root, cfg.train.affect_names);
  const auto [train, val] = split(corpus, val_fraction, info.seeds.data);
  ImageCache cache(cfg.train.cache_megabytes << 20);
  const std::uint64_t seed = evaluation_seed(info.seeds, info.epochs_completed);
  s.out << "checkpoint: " << dir.string() << " (epochs completed " << info.epochs_completed << ")\n";
  const auto tr = evaluate_accuracy(model, train, cfg.train.batch_size, seed, cache);
  const auto va = evaluate_accuracy(model, val, cfg.train.batch_size, seed, cache);
  print_table(tr, va, s);
  return kExitOk;
}

inline int grid_columns(std::size_t count) {
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
}

inline int cmd_generate(const CommonArgs& a, const std::string& affect, std::size_t count,
                        const std::string& out, Streams& s) {
  RunConfig cfg = load(a);
  if (!affect.empty()) cfg.sample_affect = affect;
  if (count) cfg.sample_count = count;
  cfg.validate();
  echo_config(cfg, s);
  const auto dir = resolve_checkpoint(cfg, a.checkpoint);
  GanModel model = load_model(dir);
  const int id = affect_index(cfg.train.affect_names, cfg.sample_affect);
  const auto images = sample_random(model.generator.decoder(), cfg.sample_count, one_hot(id), cfg.seed);
  const int cols = grid_columns(images.size());
  const int rows = static_cast<int>((images.size() + cols - 1) / cols);
  const fs::path path = out.empty() ? cfg.output_dir / ("generate_" + cfg.sample_affect + ".png") : fs::path(out);
  render_grid(images, rows, cols, path);
  GridSidecar side{"generate", checkpoint_id(dir), cfg.seed, rows, cols,
                   std::vector<AffectVector>(images.size(), one_hot(id)), {}};
  write_sidecar(path, side);
  s.out << "grid: " << path.string() << "\n";
  return kExitOk;
}

/// Rows are references; columns are the reference followed by its outputs.
inline int write_reference_grid(const RunConfig& cfg, const fs::path& dir, const std::string& mode,
                                const std::vector<fs::path>& refs,
                                const std::vector<AffectVector>& conditions,
                                const AffectVector& ref_affect, const fs::path& path, Streams& s) {
  GanModel model = load_model(dir);
  const std::size_t size = model.config.image_size;
  std::vector<ImageTensor> tiles;
  GridSidecar side{mode, checkpoint_id(dir), cfg.seed, static_cast<int>(refs.size()),
                   static_cast<int>(conditions.size() + 1), {}, {}};
  Rng rng(cfg.seed);
  for (const auto& ref : refs) {
    const ImageTensor image = load_reference(ref, size);
    tiles.push_back(image);
    side.tile_affects.push_back(ref_affect);
    side.tile_sources.push_back(ref.string());
    auto outs = transfer_affect(model.generator, image, ref_affect, conditions,
                                cfg.sampled_epsilon ? &rng : nullptr);
    for (std::size_t k = 0; k < outs.size(); ++k) {
      tiles.push_back(std::move(outs[k]));
      side.tile_affects.push_back(conditions[k]);
      side.tile_sources.push_back(ref.string());
    }
  }
  render_grid(tiles, side.rows, side.cols, path);
  write_sidecar(path, side);
  s.out << "grid: " << path.string() << "\n";
  return kExitOk;
}

inline std::vector<fs::path> references_or_default(const RunConfig& cfg,
                                                   const std::vector<std::string>& given, int affect) {
  if (!given.empty()) return {given.begin(), given.end()};
  if (cfg.corpus_root.empty())
    throw ConfigError("give --reference or set paths.corpus_root to pick references");
  return default_references(cfg, affect);
}

inline int cmd_transfer(const CommonArgs& a, const std::vector<std::string>& refs,
                        const std::string& ref_affect, const std::string& out, Streams& s) {
  RunConfig cfg = load(a);
  if (!ref_affect.empty()) cfg.reference_affect = ref_affect;
  cfg.validate();
  echo_config(cfg, s);
  const auto dir = resolve_checkpoint(cfg, a.checkpoint);
  const int ra = affect_index(cfg.train.affect_names, cfg.reference_affect);
  std::vector<AffectVector> targets;
  for (int t = 0; t < static_cast<int>(kAffectCount); ++t) targets.push_back(one_hot(t));
  const fs::path path = out.empty() ? cfg.output_dir / "transfer.png" : fs::path(out);
  return write_reference_grid(cfg, dir, "transfer", references_or_default(cfg, refs, ra), targets,
                              one_hot(ra), path, s);
}

struct MixArgs {
  std::string affect_a;
  std::string affect_b;
  std::optional<double> weight_a;
  std::optional<double> weight_b;
};

inline int cmd_mix(const CommonArgs& a, const MixArgs& m, const std::vector<std::string>& refs,
                   const std::string& ref_affect, const std::string& out, Streams& s) {
  RunConfig cfg = load(a);
  if (!ref_affect.empty()) cfg.reference_affect = ref_affect;
  if (m.weight_a) cfg.mix_weight_a = *m.weight_a;
  if (m.weight_b) cfg.mix_weight_b = *m.weight_b;
  cfg.validate();
  MixSpec spec{affect_index(cfg.train.affect_names, m.affect_a),
               affect_index(cfg.train.affect_names, m.affect_b), cfg.mix_weight_a, cfg.mix_weight_b};
  spec.validate();
  echo_config(cfg, s);
  s.out << "# mix " << m.affect_a << " x " << spec.weight_a << " + " << m.affect_b << " x "
        << spec.weight_b << "\n";
  const auto dir = resolve_checkpoint(cfg, a.checkpoint);
  const int ra = affect_index(cfg.train.affect_names, cfg.reference_affect);
  const std::vector<AffectVector> conditions{one_hot(spec.affect_a), spec.condition(),
                                             one_hot(spec.affect_b)};
  const fs::path path =
      out.empty() ? cfg.output_dir / ("mix_" + m.affect_a + "_" + m.affect_b + ".png") : fs::path(out);
  return write_reference_grid(cfg, dir, "mix", references_or_default(cfg, refs, ra), conditions,
                              one_hot(ra), path, s);
}

}  // namespace cli_detail

/// Parses and runs one subcommand. Returns 0 on success, 1 on configuration
/// errors and 2 on runtime failures.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  using namespace cli_detail;
  Streams s{out, err};
  CLI::App app{"fexgan: conditional GAN for cartoon facial expressions"};
  app.require_subcommand(1);

  CommonArgs common;
  const auto add_common = [&](CLI::App* sub, bool with_checkpoint) {
    sub->add_option("--config", common.config, "run configuration file")->required();
    sub->add_option("--seed", common.seed, "global seed override");
    if (with_checkpoint)
      sub->add_option("--checkpoint", common.checkpoint, "checkpoint directory (default: latest)");
  };

  std::string toy_out;
  int toy_ids = 2, toy_per_cell = 100, toy_size = 32;
  std::optional<std::uint64_t> toy_seed;
  auto* toy = app.add_subcommand("toy-data", "render the synthetic toy corpus");
  toy->add_option("--out", toy_out, "output root")->required();
  toy->add_option("--identities", toy_ids, "number of identities");
  toy->add_option("--per-cell", toy_per_cell, "images per identity and affect");
  toy->add_option("--image-size", toy_size, "image side in pixels");
  toy->add_option("--seed", toy_seed, "render seed");

  bool resume = false;
  std::optional<int> epochs;
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, false);
  train->add_flag("--resume", resume, "continue from the latest checkpoint");
  train->add_option("--epochs", epochs, "number of epochs");

  auto* evaluate = app.add_subcommand("evaluate", "discriminator accuracies on train and val");
  add_common(evaluate, true);

  std::string affect, out_path;
  std::size_t count = 0;
  auto* generate = app.add_subcommand("generate", "decode random latents under one affect");
  add_common(generate, true);
  generate->add_option("--affect", affect, "affect name");
  generate->add_option("--count", count, "number of images");
  generate->add_option("--out", out_path, "grid file");

  std::vector<std::string> refs;
  std::string ref_affect;
  auto* transfer = app.add_subcommand("transfer", "re-render references under every affect");
  add_common(transfer, true);
  transfer->add_option("--reference", refs, "reference image(s)");
  transfer->add_option("--reference-affect", ref_affect, "affect shown in the references");
  transfer->add_option("--out", out_path, "grid file");

  MixArgs mix_args;
  auto* mix = app.add_subcommand("mix", "render references with two affects active");
  add_common(mix, true);
  mix->add_option("--affect-a", mix_args.affect_a, "first affect")->required();
  mix->add_option("--affect-b", mix_args.affect_b, "second affect")->required();
  mix->add_option("--weight-a", mix_args.weight_a, "weight of the first affect");
  mix->add_option("--weight-b", mix_args.weight_b, "weight of the second affect");
  mix->add_option("--reference", refs, "reference image(s)");
  mix->add_option("--reference-affect", ref_affect, "affect shown in the references");
  mix->add_option("--out", out_path, "grid file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (*toy) return cmd_toy_data(toy_out, toy_ids, toy_per_cell, toy_size, toy_seed, s);
    if (*train) return cmd_train(common, resume, epochs, s);
    if (*evaluate) return cmd_evaluate(common, s);
    if (*generate) return cmd_generate(common, affect, count, out_path, s);
    if (*transfer) return cmd_transfer(common, refs, ref_affect, out_path, s);
    if (*mix) return cmd_mix(common, mix_args, refs, ref_affect, out_path, s);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace fexgan
