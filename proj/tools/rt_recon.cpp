// rt-recon: one multiplexed binary over the reconstruction library. Every
// subcommand reads/writes the repo file formats; stdout carries requested
// data, stderr carries diagnostics. Exit codes: 0 ok, 1 usage, 2 I/O,
// 3 validation/numeric.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rtrecon/augment.hpp"
#include "rtrecon/coilcomp.hpp"
#include "rtrecon/enhancer.hpp"
#include "rtrecon/errors.hpp"
#include "rtrecon/grappa.hpp"
#include "rtrecon/grid.hpp"
#include "rtrecon/io.hpp"
#include "rtrecon/metrics.hpp"
#include "rtrecon/phantom.hpp"
#include "rtrecon/pipeline.hpp"
#include "rtrecon/rng.hpp"
#include "rtrecon/sampling.hpp"

namespace fs = std::filesystem;
using namespace rtrecon;

namespace {

std::string q6(double v) { return format_number(v); }

int parse_count(const std::string& v, const std::string& what) {
  try {
    size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw UsageError("recipe: '" + what + "' needs a nonnegative integer, got '" + v + "'");
  }
}

AugmentRecipe parse_recipe_file(const std::string& path) {
  AugmentRecipe r;
  for (const auto& [k, v] : read_config(path)) {
    if (k == "hflip") r.hflip = parse_count(v, k);
    else if (k == "dropout") r.dropout = parse_count(v, k);
    else if (k == "gaussian_noise") r.gaussian_noise = parse_count(v, k);
    else if (k == "gaussian_blur") r.gaussian_blur = parse_count(v, k);
    else if (k == "piecewise_affine") r.piecewise_affine = parse_count(v, k);
    else if (k == "elastic") r.elastic = parse_count(v, k);
    else if (k == "affine") r.affine = parse_count(v, k);
    else if (k == "rotation") r.rotation = parse_count(v, k);
    else if (k == "include_identity") r.include_identity = v == "1" || v == "true";
    else throw UsageError("recipe: unknown kind '" + k + "'");
  }
  return r;
}

KeyValueConfig recipe_key_values(const AugmentRecipe& r) {
  return {{"hflip", std::to_string(r.hflip)},
          {"dropout", std::to_string(r.dropout)},
          {"gaussian_noise", std::to_string(r.gaussian_noise)},
          {"gaussian_blur", std::to_string(r.gaussian_blur)},
          {"piecewise_affine", std::to_string(r.piecewise_affine)},
          {"elastic", std::to_string(r.elastic)},
          {"affine", std::to_string(r.affine)},
          {"rotation", std::to_string(r.rotation)},
          {"include_identity", r.include_identity ? "1" : "0"}};
}

std::vector<TrainingPair> load_pair_dir(const std::string& dir) {
  std::vector<TrainingPair> pairs;
  for (int i = 0;; ++i) {
    const std::string base = dir + "/pair" + std::to_string(i);
    if (!fs::exists(base + ".input")) break;
    TrainingPair p;
    p.input = read_tensor(base + ".input");
    p.reference = read_image(base + ".reference");
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw IoError("no pair0.input under '" + dir + "'");
  return pairs;
}

// Writes pair<j>.{input,reference} and records them in the manifest.
void write_pair(const TrainingPair& pair, const std::string& dir, int j, RunManifest& m) {
  const std::string base = "pair" + std::to_string(j);
  write_tensor(pair.input, dir + "/" + base + ".input");
  write_image(pair.reference, dir + "/" + base + ".reference");
  for (const std::string& name :
       {base + ".input", base + ".input.raw", base + ".reference", base + ".reference.raw"})
    m.files.emplace_back(name, checksum_file(dir + "/" + name));
}

void warn_all(const std::vector<std::string>& errors) {
  for (const std::string& e : errors) std::cerr << "warning: " << e << "\n";
}

PipelineConfig config_from_file(const std::string& path) {
  return pipeline_config_from(read_config(path));
}

struct PhantomArgs {
  int rows = 256, cols = 192, coils = 12, slices = 1;
  uint64_t seed = 7;
  std::string out;
};

void cmd_phantom(const PhantomArgs& a) {
  fs::create_directories(a.out);
  const CoilLayout layout = a.coils == 12 ? default_rt_layout() : ring_layout(a.coils);
  RunManifest m;
  const KeyValueConfig kv = {{"phantom.rows", std::to_string(a.rows)},
                             {"phantom.cols", std::to_string(a.cols)},
                             {"phantom.coils", std::to_string(a.coils)},
                             {"phantom.slices", std::to_string(a.slices)},
                             {"phantom.seed", std::to_string(a.seed)}};
  m.config_hash = checksum_bytes(config_text(kv));
  for (const auto& [k, v] : kv) m.add_value(k, v);
  for (int i = 0; i < a.slices; ++i) {
    const RealImage image = shepp_logan_jittered(a.rows, a.cols, a.seed, i);
    const CoilImageStack stack = simulate_coils(image, layout);
    const KSpaceGrid grid = to_kspace_with_noise(stack, layout, derive_seed(a.seed, i, 11));
    const std::string name = "slice" + std::to_string(i) + ".kspace";
    write_grid(grid, a.out + "/" + name);
    m.files.emplace_back(name, checksum_file(a.out + "/" + name));
    m.files.emplace_back(name + ".raw", checksum_file(a.out + "/" + name + ".raw"));
  }
  write_manifest(m, a.out + "/manifest.txt");
}

struct MaskArgs {
  int lines = 0;
  uint64_t seed = 1;
  bool conventional = false;
  std::string out;
};

void cmd_mask(const MaskArgs& a) {
  const SamplingMask mask =
      a.conventional ? make_conventional_mask(a.lines, a.seed) : make_mask(a.lines, a.seed);
  write_mask(mask, a.out);
  const MaskStats s = mask_stats(mask);
  std::printf("profile=%s acquired=%d total=%d acceleration=%s\n",
              to_string(mask.profile).c_str(), s.acquired_count, mask.n_lines,
              q6(s.acceleration).c_str());
}

struct UndersampleArgs {
  std::string in, mask, out;
};

void cmd_undersample(const UndersampleArgs& a) {
  write_grid(apply_mask(read_kspace(a.in), read_mask(a.mask)), a.out);
}

struct GrappaArgs {
  std::string in, mask, out, kernels_out, kernels_in;
  int kx_taps = 5, source_lines = 1, acs = 0;
  double lambda_rel = 1e-4;
};

void cmd_grappa(const GrappaArgs& a) {
  const KSpaceGrid ks = read_kspace(a.in);
  const SamplingMask mask = read_mask(a.mask);
  if (mask.n_lines != ks.n_lines())
    throw ValidationError("grappa: mask has " + std::to_string(mask.n_lines) +
                          " lines, grid has " + std::to_string(ks.n_lines()));
  GrappaKernelSet set;
  if (!a.kernels_in.empty()) {
    set = read_kernels(a.kernels_in);
  } else {
    GrappaConfig cfg;
    cfg.n_source_lines_per_side = a.source_lines;
    cfg.kx_taps = a.kx_taps;
    cfg.lambda_rel = a.lambda_rel;
    const std::vector<KernelGeometry> geometries = enumerate_geometries(mask, cfg);
    int begin = 0, end = mask.n_lines;
    if (a.acs > 0) {
      if (a.acs > mask.n_lines) throw ValidationError("grappa: --acs exceeds the line count");
      begin = (mask.n_lines - a.acs) / 2;
      end = begin + a.acs;
    } else {  // contiguous acquired block around the center line
      const int center = mask.n_lines / 2;
      if (!mask.lines[center])
        throw ValidationError("grappa: center line not acquired; pass --acs explicitly");
      begin = center;
      while (begin > 0 && mask.lines[begin - 1]) --begin;
      end = center + 1;
      while (end < mask.n_lines && mask.lines[end]) ++end;
    }
    if (end - begin < min_acs_span(geometries))
      throw ValidationError("grappa: calibration span " + std::to_string(end - begin) +
                            " is narrower than the " + std::to_string(min_acs_span(geometries)) +
                            " lines the mask needs");
    set = calibrate(ks, begin, end, geometries, cfg);
  }
  write_grid(fill(ks, mask, set), a.out);
  if (!a.kernels_out.empty()) write_kernels(set, a.kernels_out);
}

struct CompressArgs {
  std::string in, out, matrix_out, matrix_in;
  int n_virtual = 2;
};

void cmd_compress(const CompressArgs& a) {
  const KSpaceGrid ks = read_kspace(a.in);
  const CompressionMatrix m =
      a.matrix_in.empty() ? fit_compression(ks, a.n_virtual) : read_compression(a.matrix_in);
  write_grid(apply_compression(ks, m), a.out);
  if (!a.matrix_out.empty()) write_compression(m, a.matrix_out);
}

struct ReconArgs {
  std::string in, out, coils_out, png;
  std::optional<double> window_min, window_max;
};

void cmd_recon(const ReconArgs& a) {
  const CoilImageStack images = ifft2(read_kspace(a.in));
  const RealImage rss = rss_combine(images);
  write_image(rss, a.out);
  if (!a.coils_out.empty()) write_grid(images, a.coils_out);
  if (!a.png.empty()) export_png(rss, a.png, a.window_min, a.window_max);
}

struct AugmentArgs {
  std::string in, out, recipe_path, config_path;
  uint64_t seed = 5;
  bool seed_given = false, recipe_given = false;
  int threads = 1;
};

void cmd_augment(const AugmentArgs& a) {
  const AugmentRecipe recipe =
      a.recipe_given ? parse_recipe_file(a.recipe_path) : AugmentRecipe{};
  fs::create_directories(a.out);
  RunManifest m;

  if (fs::exists(a.in + "/pair0.input")) {
    const std::vector<TrainingPair> pairs = load_pair_dir(a.in);
    KeyValueConfig kv = recipe_key_values(recipe);
    kv["augment.seed"] = std::to_string(a.seed);
    m.config_hash = checksum_bytes(config_text(kv));
    m.add_value("augment.seed", std::to_string(a.seed));
    m.add_value("pairs.in", std::to_string(pairs.size()));
    int j = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      const std::vector<TransformSpec> plan = build_plan(derive_seed(a.seed, i, 12), recipe);
      for (const TransformSpec& spec : plan) write_pair(apply_transform(pairs[i], spec), a.out, j++, m);
    }
    m.add_value("pairs.out", std::to_string(j));
    write_manifest(m, a.out + "/manifest.txt");
    return;
  }
  if (!fs::exists(a.in + "/slice0.kspace"))
    throw IoError("no pair0.input or slice0.kspace under '" + a.in + "'");

  // k-space dataset: reconstruct inputs per the pipeline config, then augment
  if (a.config_path.empty())
    throw UsageError("augment: a k-space dataset needs --config for the reconstruction stages");
  PipelineConfig cfg = config_from_file(a.config_path);
  cfg.dataset_dir = a.in;
  if (a.seed_given) cfg.augment_seed = a.seed;
  if (a.recipe_given) cfg.recipe = recipe;
  const PreparedDataset prepared = prepare_training_set(load_dataset(cfg), cfg, a.threads);
  warn_all(prepared.errors);
  if (prepared.pairs.empty())
    throw ValidationError("augment: every slice failed; first: " +
                          (prepared.errors.empty() ? std::string("none") : prepared.errors[0]));
  m.config_hash = checksum_bytes(config_text(to_key_values(cfg)));
  m.add_value("augment.seed", std::to_string(cfg.augment_seed));
  m.add_value("mask.seed", std::to_string(cfg.mask_seed));
  m.add_value("slices.surviving", std::to_string(prepared.slice_indices.size()));
  m.add_value("pairs.out", std::to_string(prepared.pairs.size()));
  for (size_t i = 0; i < prepared.errors.size(); ++i)
    m.add_value("error." + std::to_string(i), prepared.errors[i]);
  for (size_t j = 0; j < prepared.pairs.size(); ++j)
    write_pair(prepared.pairs[j], a.out, static_cast<int>(j), m);
  write_manifest(m, a.out + "/manifest.txt");
}

struct TrainArgs {
  std::string data, config_path, out, history;
};

void cmd_train(const TrainArgs& a) {
  PipelineConfig cfg = config_from_file(a.config_path);
  const std::vector<TrainingPair> pairs = load_pair_dir(a.data);
  if (pairs[0].input.ndim() != 3) throw ValidationError("train: pair inputs must be 3-D");
  cfg.network.input_channels = pairs[0].input.dim(0);
  validate(cfg.network);
  const TrainResult result = train(pairs, cfg.network, cfg.training, cfg.loss);
  save_weights(result.net, result.scales, a.out);
  if (!a.history.empty()) write_history_csv(result.history, a.history);
  std::printf("epochs=%zu best_epoch=%d best_val_loss=%s\n", result.history.size(),
              result.best_epoch, q6(result.best_val_loss).c_str());
}

struct InferArgs {
  std::string in, mask, kernels, matrix, weights, out, grappa_out, png;
  bool compress_first = false;
};

void cmd_infer(const InferArgs& a) {
  auto [net, scales] = load_weights(a.weights);
  ReconArtifacts art;
  art.mask = read_mask(a.mask);
  art.kernels = read_kernels(a.kernels);
  art.compression = read_compression(a.matrix);
  RealImage grappa_rss;
  const RealImage enhanced =
      infer(read_kspace(a.in), art, net, scales, a.compress_first,
            a.grappa_out.empty() ? nullptr : &grappa_rss);
  write_image(enhanced, a.out);
  if (!a.grappa_out.empty()) write_image(grappa_rss, a.grappa_out);
  if (!a.png.empty()) export_png(enhanced, a.png);
}

struct EvalArgs {
  std::string pred, ref, out, csv, label = "slice";
  double sigma = 5.0;
};

void cmd_eval(const EvalArgs& a) {
  const SliceMetrics met = evaluate(read_image(a.pred), read_image(a.ref), a.sigma);
  std::string csv = a.csv;
  if (csv.empty())
    csv = (fs::path(a.out).extension() == ".json" ? fs::path(a.out).replace_extension(".csv")
                                                  : fs::path(a.out + ".csv"))
              .string();
  emit_report({{a.label, met}}, csv, a.out);
  std::printf("ssim=%s psnr=%s nmse=%s dice_hfc=%s hausdorff_hfc=%s\n", q6(met.ssim).c_str(),
              q6(met.psnr).c_str(), q6(met.nmse).c_str(), q6(met.dice_hfc).c_str(),
              met.hausdorff_hfc ? q6(*met.hausdorff_hfc).c_str() : "");
}

struct RunArgs {
  std::string config_path, out;
  int threads = 1;
};

void cmd_run(const RunArgs& a) {
  const PipelineRunResult result = run(config_from_file(a.config_path), a.out, a.threads);
  warn_all(result.errors);
  std::printf("run_dir=%s\n", result.run_dir.c_str());
  std::printf("slices=%zu\n", result.slice_indices.size());
  std::printf("best_epoch=%d\n", result.training.best_epoch);
  std::printf("ssim.zero_filled=%s\n", q6(result.zero_filled_summary.ssim.mean).c_str());
  std::printf("ssim.grappa=%s\n", q6(result.grappa_summary.ssim.mean).c_str());
  std::printf("ssim.enhanced=%s\n", q6(result.enhanced_summary.ssim.mean).c_str());
}

void cmd_bench(const RunArgs& a) {
  const BenchResult bench = benchmark_masks(config_from_file(a.config_path), a.out, a.threads);
  warn_all(bench.nonuniform.errors);
  warn_all(bench.conventional.errors);
  std::printf("mean_ssim.nonuniform8421=%s\n",
              q6(bench.nonuniform.enhanced_summary.ssim.mean).c_str());
  std::printf("mean_ssim.conventional=%s\n",
              q6(bench.conventional.enhanced_summary.ssim.mean).c_str());
  std::printf("mean_ssim.delta=%s\n", q6(bench.mean_ssim_delta).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"accelerated-MRI reconstruction pipeline"};
  app.require_subcommand(1);

  auto phantom = std::make_shared<PhantomArgs>();
  auto* sp = app.add_subcommand("phantom", "generate a multi-coil phantom k-space dataset");
  sp->add_option("--rows", phantom->rows, "image rows")->capture_default_str();
  sp->add_option("--cols", phantom->cols, "image columns")->capture_default_str();
  sp->add_option("--coils", phantom->coils, "physical coils (12 = imbalanced array)")
      ->capture_default_str();
  sp->add_option("--slices", phantom->slices, "slice count")->required();
  sp->add_option("--seed", phantom->seed, "jitter + noise seed")->capture_default_str();
  sp->add_option("-o,--out", phantom->out, "output directory")->required();
  sp->callback([phantom] { cmd_phantom(*phantom); });

  auto mask = std::make_shared<MaskArgs>();
  auto* sm = app.add_subcommand("mask", "draw an undersampling mask");
  sm->add_option("--lines", mask->lines, "phase-encode line count")->required();
  sm->add_option("--seed", mask->seed, "draw seed")->capture_default_str();
  sm->add_flag("--conventional", mask->conventional, "uniform-interval profile");
  sm->add_option("-o,--out", mask->out, "mask file")->required();
  sm->callback([mask] { cmd_mask(*mask); });

  auto under = std::make_shared<UndersampleArgs>();
  auto* su = app.add_subcommand("undersample", "zero the lines a mask excludes");
  su->add_option("--in", under->in, "k-space input")->required();
  su->add_option("--mask", under->mask, "mask file")->required();
  su->add_option("-o,--out", under->out, "masked k-space output")->required();
  su->callback([under] { cmd_undersample(*under); });

  auto grappa = std::make_shared<GrappaArgs>();
  auto* sg = app.add_subcommand("grappa", "calibrate kernels and fill missing lines");
  sg->add_option("--in", grappa->in, "undersampled k-space")->required();
  sg->add_option("--mask", grappa->mask, "mask file")->required();
  sg->add_option("--kx-taps", grappa->kx_taps, "readout taps per source line")
      ->capture_default_str();
  sg->add_option("--source-lines", grappa->source_lines, "source lines per side")
      ->capture_default_str();
  sg->add_option("--lambda-rel", grappa->lambda_rel, "relative ridge strength")
      ->capture_default_str();
  sg->add_option("--acs", grappa->acs,
                 "centered calibration width; 0 = the mask's contiguous center block");
  sg->add_option("-o,--out", grappa->out, "filled k-space output")->required();
  sg->add_option("--kernels-out", grappa->kernels_out, "save the kernel set");
  sg->add_option("--kernels-in", grappa->kernels_in, "reuse a saved kernel set");
  sg->callback([grappa] { cmd_grappa(*grappa); });

  auto compress = std::make_shared<CompressArgs>();
  auto* sc = app.add_subcommand("compress", "project onto virtual coils");
  sc->add_option("--in", compress->in, "k-space input")->required();
  sc->add_option("--virtual", compress->n_virtual, "virtual coil count")->capture_default_str();
  sc->add_option("-o,--out", compress->out, "compressed k-space output")->required();
  sc->add_option("--matrix-out", compress->matrix_out, "save the compression matrix");
  sc->add_option("--matrix-in", compress->matrix_in, "reuse a saved matrix (skips the fit)");
  sc->callback([compress] { cmd_compress(*compress); });

  auto recon = std::make_shared<ReconArgs>();
  auto* sr = app.add_subcommand("recon", "inverse transform and RSS-combine");
  sr->add_option("--in", recon->in, "k-space input")->required();
  sr->add_option("-o,--out", recon->out, "combined image output")->required();
  sr->add_option("--coils-out", recon->coils_out, "save per-coil complex images");
  sr->add_option("--png", recon->png, "16-bit grayscale preview");
  sr->add_option("--window-min", recon->window_min, "preview window low edge");
  sr->add_option("--window-max", recon->window_max, "preview window high edge");
  sr->callback([recon] { cmd_recon(*recon); });

  auto augment = std::make_shared<AugmentArgs>();
  auto* sa = app.add_subcommand("augment",
                                "expand a dataset of pairs (or k-space slices) by the recipe");
  sa->add_option("--in", augment->in, "pair directory, or k-space slice directory")->required();
  auto* seed_opt = sa->add_option("--seed", augment->seed, "plan seed")->capture_default_str();
  auto* recipe_opt = sa->add_option("--recipe", augment->recipe_path,
                                    "recipe override file (key=value counts per kind)");
  sa->add_option("--config", augment->config_path,
                 "pipeline config; required for k-space input");
  sa->add_option("--threads", augment->threads, "worker threads")->capture_default_str();
  sa->add_option("-o,--out", augment->out, "output pair directory")->required();
  sa->callback([augment, seed_opt, recipe_opt] {
    augment->seed_given = seed_opt->count() > 0;
    augment->recipe_given = recipe_opt->count() > 0;
    cmd_augment(*augment);
  });

  auto train_args = std::make_shared<TrainArgs>();
  auto* st = app.add_subcommand("train", "fit the enhancer on a pair directory");
  st->add_option("--data", train_args->data, "pair directory")->required();
  st->add_option("--config", train_args->config_path, "network/training config")->required();
  st->add_option("-o,--out", train_args->out, "weights output")->required();
  st->add_option("--history", train_args->history, "epoch loss CSV");
  st->callback([train_args] { cmd_train(*train_args); });

  auto infer_args = std::make_shared<InferArgs>();
  auto* si = app.add_subcommand("infer", "reconstruct and enhance undersampled k-space");
  si->add_option("--in", infer_args->in, "undersampled k-space")->required();
  si->add_option("--mask", infer_args->mask, "mask file")->required();
  si->add_option("--kernels", infer_args->kernels, "kernel set")->required();
  si->add_option("--matrix", infer_args->matrix, "compression matrix")->required();
  si->add_option("--weights", infer_args->weights, "trained weights")->required();
  si->add_flag("--compress-first", infer_args->compress_first,
               "fill on virtual coils instead of physical");
  si->add_option("-o,--out", infer_args->out, "enhanced image output")->required();
  si->add_option("--grappa-out", infer_args->grappa_out, "also save the unenhanced RSS");
  si->add_option("--png", infer_args->png, "16-bit grayscale preview");
  si->callback([infer_args] { cmd_infer(*infer_args); });

  auto eval_args = std::make_shared<EvalArgs>();
  auto* se = app.add_subcommand("eval", "edge-aware quality metrics against a reference");
  se->add_option("--pred", eval_args->pred, "predicted image")->required();
  se->add_option("--ref", eval_args->ref, "reference image")->required();
  se->add_option("--sigma", eval_args->sigma, "edge-detector smoothing")->capture_default_str();
  se->add_option("--label", eval_args->label, "report row label")->capture_default_str();
  se->add_option("-o,--out", eval_args->out, "JSON report path")->required();
  se->add_option("--csv", eval_args->csv, "CSV report path (default: JSON path with .csv)");
  se->callback([eval_args] { cmd_eval(*eval_args); });

  auto run_args = std::make_shared<RunArgs>();
  auto* so = app.add_subcommand("run", "full pipeline: dataset, artifacts, training, reports");
  so->add_option("--config", run_args->config_path, "pipeline config")->required();
  so->add_option("-o,--out", run_args->out, "run directory")->required();
  so->add_option("--threads", run_args->threads, "worker threads")->capture_default_str();
  so->callback([run_args] { cmd_run(*run_args); });

  auto bench_args = std::make_shared<RunArgs>();
  auto* sb = app.add_subcommand("bench-masks", "paired comparison of the two mask profiles");
  sb->add_option("--config", bench_args->config_path, "pipeline config")->required();
  sb->add_option("-o,--out", bench_args->out, "benchmark directory")->required();
  sb->add_option("--threads", bench_args->threads, "worker threads")->capture_default_str();
  sb->callback([bench_args] { cmd_bench(*bench_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
