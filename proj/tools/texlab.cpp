// texlab: texture analysis/synthesis laboratory.
//
// Pipeline: make-corpus -> train-gan -> train-encoder -> {invert,
// interpolate, crops, eval}. Every command reads a flat key=value config
// (defaults -> --config file -> TEXLAB_* env -> --set overrides), writes its
// artifacts into a subdirectory of run.output_dir, and finishes by writing a
// run manifest plus the normalized config it ran with.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "texlab/config.hpp"
#include "texlab/corpus.hpp"
#include "texlab/inversion.hpp"
#include "texlab/latentlab.hpp"
#include "texlab/metrics.hpp"
#include "texlab/models.hpp"
#include "texlab/training.hpp"

namespace fs = std::filesystem;
using namespace texlab;

namespace {

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out_dir;
  long long seed = -1;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_file, "config file (key = value lines)");
  cmd->add_option("--set", args.sets, "override a config key, e.g. --set gan.steps=100");
  cmd->add_option("--out", args.out_dir, "output directory (run.output_dir)");
  cmd->add_option("--seed", args.seed, "run seed (run.seed)");
  cmd->add_flag("--deterministic", args.deterministic,
                "force serial, byte-reproducible execution");
}

RunConfig build_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_file.empty()) cfg = config_load(args.config_file);
  apply_env_overrides(cfg);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorCode::ParseError, "--set expects key=value, got " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.out_dir.empty()) cfg.set("run.output_dir", args.out_dir);
  if (args.seed >= 0) cfg.set("run.seed", std::to_string(args.seed));
  if (args.deterministic) cfg.set("run.deterministic", "true");
  return cfg;
}

struct RunScope {
  RunManifest manifest;
  fs::path dir;

  RunScope(const std::string& command, const RunConfig& cfg, const fs::path& run_dir) : dir(run_dir) {
    fs::create_directories(dir);
    manifest.command = command;
    manifest.config_hash = cfg.hash();
    manifest.model_config_hash = cfg.model_hash();
    manifest.seeds["run"] = static_cast<std::uint64_t>(cfg.get_int("run.seed"));
    manifest.started_at = iso8601_now();
    cfg.save((dir / "config.cfg").string());
    add((dir / "config.cfg").string());
  }

  void add(const std::string& path) { manifest.artifacts.push_back(path); }

  void finish() {
    manifest.finished_at = iso8601_now();
    write_manifest(manifest, (dir / "run_manifest.json").string());
  }
};

ModelBundle load_checkpoint(const RunConfig& cfg, const std::string& path) {
  require(fs::exists(path), ErrorCode::MissingArtifact,
          "checkpoint " + path + " not found (run train-gan / train-encoder first)");
  return load_bundle(path, cfg.model_hash());
}

CorpusCrops load_corpus(const RunConfig& cfg, const std::string& dir) {
  require(fs::exists(fs::path(dir) / "corpus_manifest.json"), ErrorCode::MissingArtifact,
          "corpus manifest not found in " + dir + " (run make-corpus first)");
  return load_corpus_dir(dir);
}

Image sample_grid(const ModelBundle& bundle, int rows, int cols, std::uint64_t seed) {
  std::vector<Image> row_imgs;
  std::vector<Image> rows_out;
  for (int r = 0; r < rows; ++r) {
    row_imgs.clear();
    for (int c = 0; c < cols; ++c) {
      Tensor<float> z = sample_z_batch<float>(1, bundle.dims.latent_dim,
                                              derive_seed(seed, "grid", r * cols + c));
      Tensor<float> w = bundle.mapping.forward(z);
      row_imgs.push_back(from_tensor(bundle.synthesis.forward(w)));
    }
    rows_out.push_back(hconcat(row_imgs, 2));
  }
  const int w = rows_out[0].width, h = rows_out[0].height;
  Image grid(3, rows * h + (rows - 1) * 2, w);
  std::fill(grid.data.begin(), grid.data.end(), 1.f);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) grid.at(c, r * (h + 2) + y, x) = rows_out[r].at(c, y, x);
  return grid;
}

// ---- subcommands ----

int cmd_make_corpus(const RunConfig& cfg) {
  const fs::path out = fs::path(cfg.get_string("run.output_dir")) / "corpus";
  RunScope run("make-corpus", cfg, out);

  const int crop_size = static_cast<int>(cfg.get_int("corpus.crop_size"));
  const auto ingest_dir = cfg.get_string("corpus.ingest_dir");
  CorpusManifest manifest;
  if (ingest_dir.empty()) {
    manifest = default_roster(crop_size, cfg.get_int("run.seed"),
                              static_cast<int>(cfg.get_int("corpus.crops_per_family")));
  } else {
    manifest = ingest_directory(ingest_dir, crop_size);
    manifest.seed = cfg.get_int("run.seed");
    for (auto& f : manifest.families)
      f.count = static_cast<int>(cfg.get_int("corpus.crops_per_family"));
  }
  const auto corpus = materialize_corpus(manifest);
  write_corpus_dir(corpus, out.string());
  run.add((out / "corpus_manifest.json").string());
  std::printf("corpus: %zu families x %lld crops at %dx%d -> %s\n", manifest.families.size(),
              cfg.get_int("corpus.crops_per_family"), crop_size, crop_size, out.c_str());
  run.finish();
  return 0;
}

int cmd_train_gan(const RunConfig& cfg, const std::string& corpus_dir) {
  const fs::path out = fs::path(cfg.get_string("run.output_dir")) / "gan";
  RunScope run("train-gan", cfg, out);

  const auto corpus = load_corpus(
      cfg, corpus_dir.empty() ? (fs::path(cfg.get_string("run.output_dir")) / "corpus").string()
                              : corpus_dir);
  const auto dims = model_dims_from(cfg);
  require(corpus.manifest.crop_size == dims.image_size, ErrorCode::SizeMismatch,
          "corpus.crop_size must equal model.image_size");

  auto bundle = create_bundle<float>(dims, derive_seed(cfg.get_int("run.seed"), "model",
                                                       cfg.get_int("model.seed")),
                                     cfg.get_bool("model.identity_mapping"));
  bundle.config_hash = cfg.model_hash();
  if (!cfg.get_string("model.phi_weights_file").empty())
    load_phi_weights(bundle, cfg.get_string("model.phi_weights_file"));

  const auto gan_cfg = gan_config_from(cfg);
  const std::string ckpt = (out / "bundle.txck").string();
  auto log = train_gan(corpus, gan_cfg, bundle, [&](int step) {
    save_bundle(bundle, ckpt);
    std::printf("  checkpoint at step %d\n", step);
    std::fflush(stdout);
  });

  // mean latent for the mean_w initialization baseline
  bundle.mean_w = estimate_mean_w(bundle, static_cast<int>(cfg.get_int("lab.mean_w_samples")),
                                  derive_seed(cfg.get_int("run.seed"), "mean-w-est"))
                      .v;
  save_bundle(bundle, ckpt);
  run.add(ckpt);
  log.write_gan_csv((out / "gan_train_log.csv").string());
  run.add((out / "gan_train_log.csv").string());
  write_png(sample_grid(bundle, 4, 8, derive_seed(cfg.get_int("run.seed"), "samples")),
            (out / "samples.png").string());
  run.add((out / "samples.png").string());
  std::printf("train-gan: %d steps done, final loss_d %.4f loss_g %.4f -> %s\n", gan_cfg.steps,
              log.records.back().a, log.records.back().b, ckpt.c_str());
  run.finish();
  return 0;
}

int cmd_train_encoder(const RunConfig& cfg, const std::string& checkpoint) {
  const fs::path out = fs::path(cfg.get_string("run.output_dir")) / "encoder";
  RunScope run("train-encoder", cfg, out);

  const std::string in_ckpt =
      checkpoint.empty() ? (fs::path(cfg.get_string("run.output_dir")) / "gan" / "bundle.txck").string()
                         : checkpoint;
  auto bundle = load_checkpoint(cfg, in_ckpt);
  const auto enc_cfg = encoder_config_from(cfg);
  const auto log = train_encoder(bundle, enc_cfg);

  const std::string ckpt = (out / "bundle.txck").string();
  save_bundle(bundle, ckpt);
  run.add(ckpt);
  log.write_encoder_csv((out / "enc_train_log.csv").string());
  run.add((out / "enc_train_log.csv").string());
  std::printf("train-encoder: %d steps done, final loss %.6f -> %s\n", enc_cfg.steps,
              log.records.back().a, ckpt.c_str());
  run.finish();
  return 0;
}

Image resolve_target(const RunConfig& cfg, const ModelBundle& bundle, const std::string& image_path,
                     long long gen_seed) {
  if (!image_path.empty()) {
    Image img = read_png(image_path);
    require(img.height == bundle.dims.image_size && img.width == bundle.dims.image_size,
            ErrorCode::SizeMismatch, "input image must be " +
                std::to_string(bundle.dims.image_size) + "x" +
                std::to_string(bundle.dims.image_size));
    return img;
  }
  // no image given: invert a generated texture
  Tensor<float> z = sample_z_batch<float>(1, bundle.dims.latent_dim,
                                          derive_seed(cfg.get_int("run.seed"), "gen-target",
                                                      static_cast<std::uint64_t>(gen_seed)));
  Tensor<float> w = bundle.mapping.forward(z);
  return from_tensor(bundle.synthesis.forward(w));
}

int cmd_invert(const RunConfig& cfg, const std::string& checkpoint, const std::string& image_path,
               long long gen_seed) {
  const fs::path out = fs::path(cfg.get_string("run.output_dir")) / "invert";
  RunScope run("invert", cfg, out);

  const std::string in_ckpt =
      checkpoint.empty()
          ? (fs::path(cfg.get_string("run.output_dir")) / "encoder" / "bundle.txck").string()
          : checkpoint;
  const auto bundle = load_checkpoint(cfg, in_ckpt);
  const Image target = resolve_target(cfg, bundle, image_path, gen_seed);
  const auto inv_cfg = inversion_config_from(cfg);
  const auto res = invert(target, inv_cfg, bundle);

  write_png(target, (out / "target.png").string());
  write_png(res.reconstruction, (out / "reconstruction.png").string());
  write_latents((out / "w_star.txl1").string(),
                std::vector<std::vector<float>>{res.w_star.v, res.w_init.v});
  write_loss_trace_csv((out / "loss_trace.csv").string(), res.loss_trace);
  for (const char* f : {"target.png", "reconstruction.png", "w_star.txl1", "loss_trace.csv"})
    run.add((out / f).string());

  nlohmann::json j;
  j["initial_loss"] = res.loss_trace.front();
  j["final_loss"] = res.loss_trace.back();
  j["iterations"] = res.loss_trace.size();
  j["converged"] = res.converged;
  j["stsim1"] = stsim1(target, res.reconstruction);
  j["stsim2"] = stsim2(target, res.reconstruction);
  std::ofstream((out / "result.json").string()) << j.dump(2) << "\n";
  run.add((out / "result.json").string());
  std::printf("invert: loss %.6g -> %.6g in %zu iters, stsim1 %.4f\n", res.loss_trace.front(),
              res.loss_trace.back(), res.loss_trace.size(), j["stsim1"].get<double>());
  run.finish();
  return 0;
}

int cmd_interpolate(const RunConfig& cfg, const std::string& checkpoint, const std::string& mode,
                    int steps) {
  const fs::path out = fs::path(cfg.get_string("run.output_dir")) / "interp";
  RunScope run("interpolate", cfg, out);

  const std::string in_ckpt =
      checkpoint.empty()
          ? (fs::path(cfg.get_string("run.output_dir")) / "encoder" / "bundle.txck").string()
          : checkpoint;
  const auto bundle = load_checkpoint(cfg, in_ckpt);
  const int n_steps = steps > 0 ? steps : static_cast<int>(cfg.get_int("lab.steps"));
  const std::uint64_t seed = derive_seed(cfg.get_int("run.seed"), "interp", cfg.get_int("lab.seed"));

  InterpolationPath path;
  if (mode == "global") {
    path = global_interpolate(bundle, seed, n_steps);
  } else {
    Tensor<float> z = sample_z_batch<float>(1, bundle.dims.latent_dim, derive_seed(seed, "w"));
    LatentW w{bundle.mapping.forward(z).v};
    TransformSpec spec;
    if (cfg.get_string("lab.transform_kind") == "scale") {
      spec.kind = TransformKind::scale;
      spec.scale_factor = cfg.get_double("lab.scale_factor");
    } else if (cfg.get_string("lab.transform_kind") == "color_perturb") {
      spec.kind = TransformKind::color_perturb;
      spec.color_offset = parse_double3(cfg.get_string("lab.color_offset"));
    } else {
      fail(ErrorCode::InvalidSpec, "lab.transform_kind must be scale or color_perturb");
    }
    auto inv_cfg = inversion_config_from(cfg);
    path = local_interpolate(w, spec, n_steps, bundle, inv_cfg);
  }

  char name[32];
  for (int i = 0; i < n_steps; ++i) {
    std::snprintf(name, sizeof(name), "frame_%02d.png", i);
    write_png(path.frames[i], (out / name).string());
    run.add((out / name).string());
  }
  write_png(hconcat(path.frames), (out / "strip.png").string());
  run.add((out / "strip.png").string());
  write_latents((out / "latents.txl1").string(), path.latents);
  run.add((out / "latents.txl1").string());
  std::printf("interpolate (%s): %d frames -> %s\n", mode.c_str(), n_steps,
              (out / "strip.png").c_str());
  run.finish();
  return 0;
}

int cmd_crops(const RunConfig& cfg, const std::string& checkpoint) {
  const fs::path out = fs::path(cfg.get_string("run.output_dir")) / "crops";
  RunScope run("crops", cfg, out);

  const std::string in_ckpt =
      checkpoint.empty()
          ? (fs::path(cfg.get_string("run.output_dir")) / "encoder" / "bundle.txck").string()
          : checkpoint;
  const auto bundle = load_checkpoint(cfg, in_ckpt);
  Tensor<float> z = sample_z_batch<float>(
      1, bundle.dims.latent_dim, derive_seed(cfg.get_int("run.seed"), "crops", cfg.get_int("lab.seed")));
  LatentW w{bundle.mapping.forward(z).v};

  auto inv_cfg = inversion_config_from(cfg);
  inv_cfg.max_iters = static_cast<int>(cfg.get_int("lab.refine_iters"));
  const int n = static_cast<int>(cfg.get_int("lab.crops_n"));
  const double sigma = cfg.get_double("lab.sigma");
  const auto crops = synthesize_crops(w, n, sigma, bundle, inv_cfg);

  write_png(synthesize(w, bundle).pixels, (out / "original.png").string());
  run.add((out / "original.png").string());
  std::vector<std::vector<float>> latents = {w.v};
  char name[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(name, sizeof(name), "crop_%02d.png", i);
    write_png(crops[i].second, (out / name).string());
    run.add((out / name).string());
    latents.push_back(crops[i].first.v);
  }
  write_latents((out / "latents.txl1").string(), latents);
  run.add((out / "latents.txl1").string());
  std::printf("crops: %d perturbed-and-refined samples (sigma %.3g) -> %s\n", n, sigma,
              out.c_str());
  run.finish();
  return 0;
}

// eval protocols: the initialization ablation grid, the loss ablation grid,
// and the latent reconstruction error distributions.

struct EvalCrop {
  std::string id;
  Image image;
};

std::vector<EvalCrop> pick_eval_crops(const CorpusCrops& corpus, int n, std::uint64_t seed) {
  std::vector<EvalCrop> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    const int fi = rng.uniform_int(0, static_cast<int>(corpus.crops.size()) - 1);
    const int ci = rng.uniform_int(0, static_cast<int>(corpus.crops[fi].size()) - 1);
    out.push_back({corpus.manifest.families[fi].family_id + "/" + std::to_string(ci),
                   corpus.crops[fi][ci]});
  }
  return out;
}

MetricReport eval_variant(const std::vector<EvalCrop>& crops, const ModelBundle& bundle,
                          const InversionConfig& cfg, bool encoder_only, std::uint64_t hash) {
  MetricReport report;
  report.config_hash = hash;
  for (const auto& crop : crops) {
    Image recon;
    if (encoder_only) {
      recon = resynthesize(crop.image, bundle).pixels;
    } else {
      recon = invert(crop.image, cfg, bundle).reconstruction;
    }
    report.pairs.push_back({crop.id, stsim1(crop.image, recon), stsim2(crop.image, recon)});
  }
  return report;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& corpus_dir,
             const std::string& protocol) {
  const fs::path out = fs::path(cfg.get_string("run.output_dir")) / "eval";
  RunScope run("eval", cfg, out);

  const std::string in_ckpt =
      checkpoint.empty()
          ? (fs::path(cfg.get_string("run.output_dir")) / "encoder" / "bundle.txck").string()
          : checkpoint;
  const auto bundle = load_checkpoint(cfg, in_ckpt);
  nlohmann::json report;
  report["protocol"] = protocol;
  report["config_hash"] = cfg.hash();

  const std::uint64_t eval_seed = derive_seed(cfg.get_int("run.seed"), "eval", cfg.get_int("eval.seed"));
  auto base_inv = inversion_config_from(cfg);
  base_inv.loss_mode = LossMode::style_gram;

  if (protocol == "table1" || protocol == "all") {
    const auto corpus = load_corpus(
        cfg, corpus_dir.empty() ? (fs::path(cfg.get_string("run.output_dir")) / "corpus").string()
                                : corpus_dir);
    const auto crops = pick_eval_crops(corpus, static_cast<int>(cfg.get_int("eval.n_crops")),
                                       derive_seed(eval_seed, "table1"));
    struct Row {
      const char* label;
      InitMode init;
      bool encoder_only;
    };
    const Row rows[] = {{"Random Init.+Opt.", InitMode::random, false},
                        {"Mean W Init.+Opt.", InitMode::mean_w, false},
                        {"Encoder", InitMode::encoder, true},
                        {"Encoder+Opt.", InitMode::encoder, false}};
    std::ofstream csv((out / "table1.csv").string());
    csv << "row,mean_stsim1,mean_stsim2\n";
    for (const auto& row : rows) {
      auto inv = base_inv;
      inv.init_mode = row.init;
      const auto rep = eval_variant(crops, bundle, inv, row.encoder_only, cfg.hash());
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%.6f,%.6f\n", row.label, rep.mean1(), rep.mean2());
      csv << line;
      report["table1"][row.label] = {{"stsim1", rep.mean1()}, {"stsim2", rep.mean2()}};
      std::printf("  table1 %-18s stsim1 %.4f stsim2 %.4f\n", row.label, rep.mean1(), rep.mean2());
      std::fflush(stdout);
    }
    run.add((out / "table1.csv").string());
  }

  if (protocol == "table2" || protocol == "all") {
    const auto corpus = load_corpus(
        cfg, corpus_dir.empty() ? (fs::path(cfg.get_string("run.output_dir")) / "corpus").string()
                                : corpus_dir);
    const auto crops = pick_eval_crops(corpus, static_cast<int>(cfg.get_int("eval.n_crops")),
                                       derive_seed(eval_seed, "table1"));
    struct Row {
      const char* label;
      LossMode loss;
    };
    const Row rows[] = {{"Pixel-wise L2 loss", LossMode::pixel_l2},
                        {"Content loss", LossMode::content},
                        {"Style loss", LossMode::style_gram}};
    std::ofstream csv((out / "table2.csv").string());
    csv << "row,mean_stsim1,mean_stsim2\n";
    for (const auto& row : rows) {
      auto inv = base_inv;
      inv.init_mode = InitMode::encoder;
      inv.loss_mode = row.loss;
      const auto rep = eval_variant(crops, bundle, inv, false, cfg.hash());
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%.6f,%.6f\n", row.label, rep.mean1(), rep.mean2());
      csv << line;
      report["table2"][row.label] = {{"stsim1", rep.mean1()}, {"stsim2", rep.mean2()}};
      std::printf("  table2 %-18s stsim1 %.4f stsim2 %.4f\n", row.label, rep.mean1(), rep.mean2());
      std::fflush(stdout);
    }
    run.add((out / "table2.csv").string());
  }

  if (protocol == "fig9" || protocol == "all") {
    const int n = static_cast<int>(cfg.get_int("metrics.n_latent_samples"));
    const auto trained =
        latent_error_distribution(bundle, EncoderKind::trained, n, derive_seed(eval_seed, "fig9"));
    const auto random = latent_error_distribution(bundle, EncoderKind::random_init, n,
                                                  derive_seed(eval_seed, "fig9"));
    write_distribution_csv(trained, (out / "latent_errors_trained.csv").string());
    write_distribution_csv(random, (out / "latent_errors_random.csv").string());
    nlohmann::json dist;
    dist["trained"] = distribution_summary_json(trained);
    dist["random_init"] = distribution_summary_json(random);
    dist["separated"] = trained.percentile(99) < random.percentile(1);
    std::ofstream((out / "latent_errors.json").string()) << dist.dump(2) << "\n";
    write_png(render_histogram(trained, random), (out / "latent_errors.png").string());
    report["fig9"] = dist;
    std::printf("  fig9: trained p99 %.4f vs random p1 %.4f (%s)\n", trained.percentile(99),
                random.percentile(1), dist["separated"].get<bool>() ? "separated" : "OVERLAP");
    for (const char* f :
         {"latent_errors_trained.csv", "latent_errors_random.csv", "latent_errors.json",
          "latent_errors.png"})
      run.add((out / f).string());
  }

  std::ofstream((out / "eval_report.json").string()) << report.dump(2) << "\n";
  run.add((out / "eval_report.json").string());
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"texlab: texture analysis and synthesis laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string corpus_dir, checkpoint, image_path, mode = "global", protocol = "all";
  std::string init_override, loss_override;
  long long gen_seed = 0;
  int steps = 0;

  auto* mk = app.add_subcommand("make-corpus", "generate or ingest the texture corpus");
  add_common(mk, args);

  auto* tg = app.add_subcommand("train-gan", "adversarially train generator and discriminator");
  add_common(tg, args);
  tg->add_option("--corpus", corpus_dir, "corpus directory (default <out>/corpus)");

  auto* te = app.add_subcommand("train-encoder", "train the encoder by latent reconstruction");
  add_common(te, args);
  te->add_option("--checkpoint", checkpoint, "input checkpoint (default <out>/gan/bundle.txck)");

  auto* iv = app.add_subcommand("invert", "invert an image into the latent space");
  add_common(iv, args);
  iv->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/encoder/bundle.txck)");
  iv->add_option("--image", image_path, "target PNG (default: a generated texture)");
  iv->add_option("--gen-seed", gen_seed, "seed for the generated target when --image is absent");
  iv->add_option("--init", init_override, "initialization: encoder | mean_w | random");
  iv->add_option("--loss", loss_override, "loss: style | pixel | content");

  auto* ip = app.add_subcommand("interpolate", "latent-space interpolation strips");
  add_common(ip, args);
  ip->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/encoder/bundle.txck)");
  ip->add_option("--mode", mode, "global | local")->check(CLI::IsMember({"global", "local"}));
  ip->add_option("--steps", steps, "number of frames (default lab.steps)");

  auto* cr = app.add_subcommand("crops", "synthesize crops via latent perturbation");
  add_common(cr, args);
  cr->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/encoder/bundle.txck)");

  auto* ev = app.add_subcommand("eval", "reproduce the ablation grids and error distributions");
  add_common(ev, args);
  ev->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/encoder/bundle.txck)");
  ev->add_option("--corpus", corpus_dir, "corpus directory (default <out>/corpus)");
  ev->add_option("--protocol", protocol, "table1 | table2 | fig9 | all")
      ->check(CLI::IsMember({"table1", "table2", "fig9", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (!init_override.empty()) args.sets.push_back("invert.init_mode=" + init_override);
    if (!loss_override.empty())
      args.sets.push_back("invert.loss_mode=" +
                          std::string(loss_mode_from_name(loss_override) == LossMode::style_gram
                                          ? "style_gram"
                                          : loss_mode_from_name(loss_override) == LossMode::pixel_l2
                                                ? "pixel_l2"
                                                : "content"));
    const RunConfig cfg = build_config(args);
    if (mk->parsed()) return cmd_make_corpus(cfg);
    if (tg->parsed()) return cmd_train_gan(cfg, corpus_dir);
    if (te->parsed()) return cmd_train_encoder(cfg, checkpoint);
    if (iv->parsed()) return cmd_invert(cfg, checkpoint, image_path, gen_seed);
    if (ip->parsed()) return cmd_interpolate(cfg, checkpoint, mode, steps);
    if (cr->parsed()) return cmd_crops(cfg, checkpoint);
    if (ev->parsed()) return cmd_eval(cfg, checkpoint, corpus_dir, protocol);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::UnknownKey:
      case ErrorCode::ParseError:
      case ErrorCode::TypeError:
      case ErrorCode::InvalidParams:
        return 1;  // usage / configuration error
      default:
        return 2;  // runtime failure
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
