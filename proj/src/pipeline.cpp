#include "rtrecon/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rtrecon/errors.hpp"
#include "rtrecon/phantom.hpp"
#include "rtrecon/rng.hpp"

namespace rtrecon {
namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int to_int(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const long n = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw UsageError("config key '" + key + "': bad integer '" + v + "'");
  return static_cast<int>(n);
}

uint64_t to_u64(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw UsageError("config key '" + key + "': bad integer '" + v + "'");
  return n;
}

double to_double(const std::string& v, const std::string& key) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw UsageError("config key '" + key + "': bad number '" + v + "'");
  return d;
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + key + "': expected true/false, got '" + v + "'");
}

// index-sharded loop; each index writes only its own slot, so results are
// order-independent. The first escaped exception is rethrown after the join.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

SamplingMask mask_for(const PipelineConfig& cfg, int n_lines) {
  return cfg.mask_profile == MaskProfile::kNonuniform8421
             ? make_mask(n_lines, cfg.mask_seed)
             : make_conventional_mask(n_lines, cfg.mask_seed);
}

RealImage magnitudes_rss(const CoilImageStack& images) { return rss_combine(images); }

Tensor magnitude_tensor(const CoilImageStack& images) {
  Tensor t({images.n_coils(), images.rows(), images.cols()});
  for (int c = 0; c < images.n_coils(); ++c)
    for (int r = 0; r < images.rows(); ++r)
      for (int k = 0; k < images.cols(); ++k) t.at(c, r, k) = std::abs(images.at(c, r, k));
  return t;
}

std::string q6(double v) { return format_number(v); }

}  // namespace

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::string csv = "epoch,train_loss,val_loss,lr\n";
  for (size_t i = 0; i < history.size(); ++i)
    csv += std::to_string(i + 1) + "," + fmt_double(history[i].train_loss) + "," +
           fmt_double(history[i].val_loss) + "," + fmt_double(history[i].lr) + "\n";
  write_file_bytes(path, csv);
}

void validate(const PipelineConfig& config) {
  if (config.n_slices < 1) throw ValidationError("pipeline: n_slices must be >= 1");
  if (config.rows < 16 || config.cols < 16)
    throw ValidationError("pipeline: slices must be at least 16x16");
  if (config.n_coils < 2) throw ValidationError("pipeline: need at least 2 physical coils");
  if (config.n_virtual < 1 || config.n_virtual > config.n_coils)
    throw ValidationError("pipeline: n_virtual must be in [1, n_coils]");
  if (config.network.input_channels != config.n_virtual)
    throw ValidationError("pipeline: network input channels must equal n_virtual");
  if (config.acs_lines < 0) throw ValidationError("pipeline: acs_lines must be >= 0");
  if (!(config.canny_sigma > 0.0)) throw ValidationError("pipeline: canny_sigma must be positive");
  if (config.loss.alpha < 0 || config.loss.beta < 0 || config.loss.gamma < 0 ||
      config.loss.alpha + config.loss.beta + config.loss.gamma <= 0)
    throw ValidationError("pipeline: loss weights must be nonnegative and not all zero");
  const int variants = config.recipe.hflip + config.recipe.dropout + config.recipe.gaussian_noise +
                       config.recipe.gaussian_blur + config.recipe.piecewise_affine +
                       config.recipe.elastic + config.recipe.affine + config.recipe.rotation +
                       (config.recipe.include_identity ? 1 : 0);
  if (variants < 1) throw ValidationError("pipeline: augmentation recipe is empty");
  validate(config.network);
  validate(config.training);
  const int stride = 1 << (config.network.depth - 1);
  if (config.rows % stride != 0 || config.cols % stride != 0)
    throw ValidationError("pipeline: slice size must be divisible by 2^(depth-1)");
}

PipelineConfig pipeline_config_from(const KeyValueConfig& kv) {
  PipelineConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "mask.profile")
      c.mask_profile = mask_profile_from_string(value);
    else if (key == "mask.seed")
      c.mask_seed = to_u64(value, key);
    else if (key == "grappa.source_lines_per_side")
      c.grappa.n_source_lines_per_side = to_int(value, key);
    else if (key == "grappa.kx_taps")
      c.grappa.kx_taps = to_int(value, key);
    else if (key == "grappa.lambda_rel")
      c.grappa.lambda_rel = to_double(value, key);
    else if (key == "grappa.acs_lines")
      c.acs_lines = to_int(value, key);
    else if (key == "compress.n_virtual")
      c.n_virtual = to_int(value, key);
    else if (key == "compress.first")
      c.compress_first = to_bool(value, key);
    else if (key == "augment.seed")
      c.augment_seed = to_u64(value, key);
    else if (key == "network.depth")
      c.network.depth = to_int(value, key);
    else if (key == "network.base_filters")
      c.network.base_filters = to_int(value, key);
    else if (key == "network.dropout_rate")
      c.network.dropout_rate = to_double(value, key);
    else if (key == "train.batch_size")
      c.training.batch_size = to_int(value, key);
    else if (key == "train.initial_lr")
      c.training.initial_lr = to_double(value, key);
    else if (key == "train.plateau_factor")
      c.training.plateau_factor = to_double(value, key);
    else if (key == "train.plateau_patience")
      c.training.plateau_patience = to_int(value, key);
    else if (key == "train.early_stop_patience")
      c.training.early_stop_patience = to_int(value, key);
    else if (key == "train.max_epochs")
      c.training.max_epochs = to_int(value, key);
    else if (key == "train.seed")
      c.training.seed = to_u64(value, key);
    else if (key == "train.split_fraction")
      c.training.split_fraction = to_double(value, key);
    else if (key == "loss.alpha")
      c.loss.alpha = to_double(value, key);
    else if (key == "loss.beta")
      c.loss.beta = to_double(value, key);
    else if (key == "loss.gamma")
      c.loss.gamma = to_double(value, key);
    else if (key == "dataset.dir")
      c.dataset_dir = value;
    else if (key == "phantom.slices")
      c.n_slices = to_int(value, key);
    else if (key == "phantom.rows")
      c.rows = to_int(value, key);
    else if (key == "phantom.cols")
      c.cols = to_int(value, key);
    else if (key == "phantom.coils")
      c.n_coils = to_int(value, key);
    else if (key == "phantom.seed")
      c.phantom_seed = to_u64(value, key);
    else if (key == "eval.canny_sigma")
      c.canny_sigma = to_double(value, key);
    else
      throw UsageError("unknown config key '" + key + "'");
  }
  c.network.input_channels = c.n_virtual;
  validate(c);
  return c;
}

KeyValueConfig to_key_values(const PipelineConfig& c) {
  KeyValueConfig kv;
  kv["mask.profile"] = to_string(c.mask_profile);
  kv["mask.seed"] = std::to_string(c.mask_seed);
  kv["grappa.source_lines_per_side"] = std::to_string(c.grappa.n_source_lines_per_side);
  kv["grappa.kx_taps"] = std::to_string(c.grappa.kx_taps);
  kv["grappa.lambda_rel"] = fmt_double(c.grappa.lambda_rel);
  kv["grappa.acs_lines"] = std::to_string(c.acs_lines);
  kv["compress.n_virtual"] = std::to_string(c.n_virtual);
  kv["compress.first"] = c.compress_first ? "true" : "false";
  kv["augment.seed"] = std::to_string(c.augment_seed);
  kv["network.depth"] = std::to_string(c.network.depth);
  kv["network.base_filters"] = std::to_string(c.network.base_filters);
  kv["network.dropout_rate"] = fmt_double(c.network.dropout_rate);
  kv["train.batch_size"] = std::to_string(c.training.batch_size);
  kv["train.initial_lr"] = fmt_double(c.training.initial_lr);
  kv["train.plateau_factor"] = fmt_double(c.training.plateau_factor);
  kv["train.plateau_patience"] = std::to_string(c.training.plateau_patience);
  kv["train.early_stop_patience"] = std::to_string(c.training.early_stop_patience);
  kv["train.max_epochs"] = std::to_string(c.training.max_epochs);
  kv["train.seed"] = std::to_string(c.training.seed);
  kv["train.split_fraction"] = fmt_double(c.training.split_fraction);
  kv["loss.alpha"] = fmt_double(c.loss.alpha);
  kv["loss.beta"] = fmt_double(c.loss.beta);
  kv["loss.gamma"] = fmt_double(c.loss.gamma);
  if (!c.dataset_dir.empty()) kv["dataset.dir"] = c.dataset_dir;
  kv["phantom.slices"] = std::to_string(c.n_slices);
  kv["phantom.rows"] = std::to_string(c.rows);
  kv["phantom.cols"] = std::to_string(c.cols);
  kv["phantom.coils"] = std::to_string(c.n_coils);
  kv["phantom.seed"] = std::to_string(c.phantom_seed);
  kv["eval.canny_sigma"] = fmt_double(c.canny_sigma);
  return kv;
}

std::vector<KSpaceGrid> load_dataset(const PipelineConfig& config) {
  std::vector<KSpaceGrid> slices;
  if (!config.dataset_dir.empty()) {
    for (int i = 0;; ++i) {
      const std::string path = config.dataset_dir + "/slice" + std::to_string(i) + ".kspace";
      if (!fs::exists(path)) break;
      slices.push_back(read_kspace(path));
    }
    if (slices.empty())
      throw IoError("no slice0.kspace under dataset dir '" + config.dataset_dir + "'");
    return slices;
  }
  const CoilLayout layout =
      config.n_coils == 12 ? default_rt_layout() : ring_layout(config.n_coils);
  slices.reserve(config.n_slices);
  for (int i = 0; i < config.n_slices; ++i) {
    const RealImage image =
        shepp_logan_jittered(config.rows, config.cols, config.phantom_seed, i);
    const CoilImageStack stack = simulate_coils(image, layout);
    slices.push_back(to_kspace_with_noise(stack, layout, derive_seed(config.phantom_seed, i, 11)));
  }
  return slices;
}

ReconArtifacts make_artifacts(const KSpaceGrid& full, const SamplingMask& mask,
                              const PipelineConfig& config) {
  if (mask.n_lines != full.n_lines())
    throw ValidationError("make_artifacts: mask length does not match the grid");
  ReconArtifacts art;
  art.mask = mask;

  const std::vector<KernelGeometry> geometries = enumerate_geometries(mask, config.grappa);
  int acs_begin = 0, acs_end = full.n_lines();
  if (config.acs_lines > 0) {
    if (config.acs_lines > full.n_lines())
      throw ValidationError("make_artifacts: acs_lines exceeds the line count");
    acs_begin = (full.n_lines() - config.acs_lines) / 2;
    acs_end = acs_begin + config.acs_lines;
  }
  if (acs_end - acs_begin < min_acs_span(geometries))
    throw ValidationError("make_artifacts: calibration span " +
                          std::to_string(acs_end - acs_begin) + " is narrower than the " +
                          std::to_string(min_acs_span(geometries)) + " lines the mask needs");

  if (config.compress_first) {
    art.compression = fit_compression(full, config.n_virtual);
    const KSpaceGrid virt = apply_compression(full, art.compression);
    art.kernels = calibrate(virt, acs_begin, acs_end, geometries, config.grappa);
  } else {
    art.kernels = calibrate(full, acs_begin, acs_end, geometries, config.grappa);
    const KSpaceGrid filled = fill(apply_mask(full, mask), mask, art.kernels);
    art.compression = fit_compression(filled, config.n_virtual);
  }
  return art;
}

SliceRecon reconstruct_slice(const KSpaceGrid& masked, const ReconArtifacts& artifacts,
                             bool compress_first) {
  KSpaceGrid zero_filled_virtual = apply_compression(masked, artifacts.compression);
  KSpaceGrid filled_virtual = compress_first
      ? fill(zero_filled_virtual, artifacts.mask, artifacts.kernels)
      : apply_compression(fill(masked, artifacts.mask, artifacts.kernels),
                          artifacts.compression);

  const CoilImageStack images = ifft2(filled_virtual);
  SliceRecon out;
  out.input = magnitude_tensor(images);
  out.grappa_rss = magnitudes_rss(images);
  out.zero_filled_rss = magnitudes_rss(ifft2(zero_filled_virtual));
  return out;
}

PreparedDataset prepare_training_set(const std::vector<KSpaceGrid>& slices,
                                     const PipelineConfig& config, int threads) {
  if (slices.empty()) throw ValidationError("prepare_training_set: empty dataset");
  for (const KSpaceGrid& s : slices)
    if (s.rows() != slices[0].rows() || s.cols() != slices[0].cols() ||
        s.n_coils() != slices[0].n_coils() || s.line_axis() != slices[0].line_axis())
      throw ValidationError("prepare_training_set: slices disagree on geometry");

  PreparedDataset out;
  out.mask = mask_for(config, slices[0].n_lines());

  const int n = static_cast<int>(slices.size());
  std::vector<std::optional<SliceRecon>> recons(n);
  std::vector<RealImage> references(n);
  std::vector<std::vector<TrainingPair>> augmented(n);
  std::vector<std::string> errors(n);

  parallel_for(n, threads, [&](int i) {
    try {
      const KSpaceGrid& full = slices[i];
      full.require_finite("slice k-space");
      references[i] = rss_combine(ifft2(full));
      const ReconArtifacts art = make_artifacts(full, out.mask, config);
      SliceRecon recon = reconstruct_slice(apply_mask(full, out.mask), art,
                                           config.compress_first);
      TrainingPair base;
      base.input = recon.input;
      base.reference = references[i];
      const std::vector<TransformSpec> plan =
          build_plan(derive_seed(config.augment_seed, i, 12), config.recipe);
      for (const TransformSpec& spec : plan)
        augmented[i].push_back(apply_transform(base, spec));
      recons[i] = std::move(recon);
    } catch (const std::exception& e) {
      errors[i] = "slice " + std::to_string(i) + ": " + e.what();
      augmented[i].clear();
      recons[i].reset();
    }
  });

  for (int i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      out.errors.push_back(errors[i]);
      continue;
    }
    out.slice_indices.push_back(i);
    out.references.push_back(std::move(references[i]));
    out.recons.push_back(std::move(*recons[i]));
    for (TrainingPair& p : augmented[i]) out.pairs.push_back(std::move(p));
  }
  return out;
}

RealImage enhance(const Tensor& input, Enhancer& net, const NormalizationScales& scales) {
  if (input.ndim() != 3) throw ValidationError("enhance: input must be [channels][rows][cols]");
  const Tensor norm = normalize_input(input, scales);
  Tensor batch({1, input.dim(0), input.dim(1), input.dim(2)});
  batch.data = norm.data;
  const Tensor out = net.forward(batch, false, nullptr);
  RealImage image(input.dim(1), input.dim(2));
  image.data() = out.data;
  return denormalize_output(image, scales);
}

RealImage infer(const KSpaceGrid& masked, const ReconArtifacts& artifacts, Enhancer& net,
                const NormalizationScales& scales, bool compress_first,
                RealImage* grappa_rss_out) {
  if (artifacts.mask.n_lines != masked.n_lines())
    throw ValidationError("infer: mask length does not match the grid");
  if (artifacts.compression.n_physical != masked.n_coils())
    throw ValidationError("infer: compression matrix expects " +
                          std::to_string(artifacts.compression.n_physical) + " coils, grid has " +
                          std::to_string(masked.n_coils()));
  const int fill_coils =
      compress_first ? artifacts.compression.n_virtual : masked.n_coils();
  if (artifacts.kernels.n_coils != fill_coils)
    throw ValidationError("infer: kernel set was calibrated for " +
                          std::to_string(artifacts.kernels.n_coils) + " coils, fill needs " +
                          std::to_string(fill_coils));
  if (net.config().input_channels != artifacts.compression.n_virtual)
    throw ValidationError("infer: network expects " +
                          std::to_string(net.config().input_channels) +
                          " channels, compression yields " +
                          std::to_string(artifacts.compression.n_virtual));
  if (static_cast<int>(scales.input_min.size()) != net.config().input_channels)
    throw ValidationError("infer: normalization scales do not match the network");

  SliceRecon recon = reconstruct_slice(masked, artifacts, compress_first);
  if (grappa_rss_out) *grappa_rss_out = recon.grappa_rss;
  return enhance(recon.input, net, scales);
}

PipelineRunResult run(const PipelineConfig& config, const std::string& run_dir, int threads) {
  validate(config);
  fs::create_directories(run_dir);
  const auto at = [&](const std::string& name) { return run_dir + "/" + name; };

  const std::vector<KSpaceGrid> slices = load_dataset(config);
  PreparedDataset prepared = prepare_training_set(slices, config, threads);
  if (prepared.pairs.empty())
    throw ValidationError("pipeline run: every slice failed preparation: " +
                          (prepared.errors.empty() ? std::string("(no diagnostics)")
                                                   : prepared.errors.front()));

  PipelineRunResult result;
  result.run_dir = run_dir;
  result.mask = prepared.mask;
  result.errors = prepared.errors;
  result.slice_indices = prepared.slice_indices;
  result.training = train(prepared.pairs, config.network, config.training, config.loss);

  const int n_eval = static_cast<int>(prepared.recons.size());
  result.zero_filled.resize(n_eval);
  result.grappa.resize(n_eval);
  result.enhanced.resize(n_eval);
  std::vector<RealImage> enhanced_images(n_eval);
  for (int k = 0; k < n_eval; ++k)
    enhanced_images[k] =
        enhance(prepared.recons[k].input, result.training.net, result.training.scales);
  parallel_for(n_eval, threads, [&](int k) {
    const RealImage& ref = prepared.references[k];
    result.zero_filled[k] = evaluate(prepared.recons[k].zero_filled_rss, ref, config.canny_sigma);
    result.grappa[k] = evaluate(prepared.recons[k].grappa_rss, ref, config.canny_sigma);
    result.enhanced[k] = evaluate(enhanced_images[k], ref, config.canny_sigma);
  });
  result.zero_filled_summary = aggregate(result.zero_filled);
  result.grappa_summary = aggregate(result.grappa);
  result.enhanced_summary = aggregate(result.enhanced);

  // artifacts: canonical config, mask, slice-level kernels/compression from
  // the first surviving slice, weights, history, per-arm reports, previews
  const KeyValueConfig kv = to_key_values(config);
  write_config(kv, at("config.cfg"));
  write_mask(prepared.mask, at("mask.txt"));
  const ReconArtifacts art = make_artifacts(slices[prepared.slice_indices[0]], prepared.mask,
                                            config);
  write_kernels(art.kernels, at("kernels.txt"));
  write_compression(art.compression, at("compression.txt"));
  save_weights(result.training.net, result.training.scales, at("weights.txt"));
  write_history_csv(result.training.history, at("history.csv"));

  const auto rows_for = [&](const std::vector<SliceMetrics>& metrics) {
    std::vector<ReportRow> rows;
    for (int k = 0; k < n_eval; ++k)
      rows.push_back({"slice" + std::to_string(prepared.slice_indices[k]), metrics[k]});
    return rows;
  };
  emit_report(rows_for(result.zero_filled), at("report_zero_filled.csv"),
              at("report_zero_filled.json"));
  emit_report(rows_for(result.grappa), at("report_grappa.csv"), at("report_grappa.json"));
  emit_report(rows_for(result.enhanced), at("report_enhanced.csv"), at("report_enhanced.json"));

  const std::string tag = "slice" + std::to_string(prepared.slice_indices[0]);
  export_png(prepared.references[0], at(tag + "_reference.png"));
  export_png(prepared.recons[0].grappa_rss, at(tag + "_grappa.png"));
  export_png(enhanced_images[0], at(tag + "_enhanced.png"));

  RunManifest manifest;
  manifest.config_hash = checksum_bytes(config_text(kv));
  manifest.add_value("mask.profile", to_string(config.mask_profile));
  manifest.add_value("mask.seed", std::to_string(config.mask_seed));
  manifest.add_value("augment.seed", std::to_string(config.augment_seed));
  manifest.add_value("train.seed", std::to_string(config.training.seed));
  manifest.add_value("phantom.seed", std::to_string(config.phantom_seed));
  manifest.add_value("slices.loaded", std::to_string(slices.size()));
  manifest.add_value("slices.surviving", std::to_string(n_eval));
  manifest.add_value("pairs.trained", std::to_string(prepared.pairs.size()));
  manifest.add_value("train.best_epoch", std::to_string(result.training.best_epoch));
  manifest.add_value("ssim.zero_filled", q6(result.zero_filled_summary.ssim.mean));
  manifest.add_value("ssim.grappa", q6(result.grappa_summary.ssim.mean));
  manifest.add_value("ssim.enhanced", q6(result.enhanced_summary.ssim.mean));
  for (size_t i = 0; i < prepared.errors.size(); ++i)
    manifest.add_value("error." + std::to_string(i), prepared.errors[i]);
  const std::vector<std::string> outputs = {
      "config.cfg",          "mask.txt",
      "kernels.txt",         "kernels.txt.raw",
      "compression.txt",     "compression.txt.raw",
      "weights.txt",         "weights.txt.raw",
      "history.csv",         "report_zero_filled.csv",
      "report_zero_filled.json", "report_grappa.csv",
      "report_grappa.json",  "report_enhanced.csv",
      "report_enhanced.json", tag + "_reference.png",
      tag + "_grappa.png",   tag + "_enhanced.png",
  };
  // manifest paths stay run_dir-relative so two runs are byte-comparable
  for (const std::string& name : outputs)
    manifest.files.emplace_back(name, checksum_file(at(name)));
  write_manifest(manifest, at("manifest.txt"));
  return result;
}

BenchResult benchmark_masks(const PipelineConfig& config, const std::string& run_dir,
                            int threads) {
  validate(config);
  fs::create_directories(run_dir);

  BenchResult bench;
  PipelineConfig arm = config;
  arm.mask_profile = MaskProfile::kNonuniform8421;
  bench.nonuniform = run(arm, run_dir + "/nonuniform8421", threads);
  arm.mask_profile = MaskProfile::kConventionalUniform;
  bench.conventional = run(arm, run_dir + "/conventional", threads);
  bench.mean_ssim_delta =
      bench.nonuniform.enhanced_summary.ssim.mean - bench.conventional.enhanced_summary.ssim.mean;

  // paired rows over slices both arms reconstructed
  std::vector<std::pair<int, int>> paired;  // index into each arm's results
  for (size_t a = 0; a < bench.nonuniform.slice_indices.size(); ++a)
    for (size_t b = 0; b < bench.conventional.slice_indices.size(); ++b)
      if (bench.nonuniform.slice_indices[a] == bench.conventional.slice_indices[b])
        paired.emplace_back(static_cast<int>(a), static_cast<int>(b));

  std::string csv = "slice,arm,ssim,psnr,nmse,dice_hfc,hausdorff_hfc\n";
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  const auto add_row = [&](int slice, const std::string& arm_name, const SliceMetrics& m) {
    csv += std::to_string(slice) + "," + arm_name + "," + q6(m.ssim) + "," + q6(m.psnr) + "," +
           q6(m.nmse) + "," + q6(m.dice_hfc) + ",";
    if (m.hausdorff_hfc) csv += q6(*m.hausdorff_hfc);
    csv += "\n";
    nlohmann::ordered_json jr;
    jr["slice"] = slice;
    jr["arm"] = arm_name;
    jr["ssim"] = std::strtod(q6(m.ssim).c_str(), nullptr);
    j["rows"].push_back(jr);
  };
  for (const auto& [a, b] : paired) {
    add_row(bench.nonuniform.slice_indices[a], "nonuniform8421", bench.nonuniform.enhanced[a]);
    add_row(bench.conventional.slice_indices[b], "conventional", bench.conventional.enhanced[b]);
  }
  csv += "mean,nonuniform8421," + q6(bench.nonuniform.enhanced_summary.ssim.mean) + ",,,,\n";
  csv += "mean,conventional," + q6(bench.conventional.enhanced_summary.ssim.mean) + ",,,,\n";
  csv += "delta,nonuniform8421-conventional," + q6(bench.mean_ssim_delta) + ",,,,\n";
  j["mean_ssim"] = {
      {"nonuniform8421", std::strtod(q6(bench.nonuniform.enhanced_summary.ssim.mean).c_str(),
                                     nullptr)},
      {"conventional", std::strtod(q6(bench.conventional.enhanced_summary.ssim.mean).c_str(),
                                   nullptr)},
      {"delta", std::strtod(q6(bench.mean_ssim_delta).c_str(), nullptr)},
  };
  write_file_bytes(run_dir + "/bench_report.csv", csv);
  write_file_bytes(run_dir + "/bench_report.json", j.dump(2) + "\n");

  RunManifest manifest;
  manifest.config_hash = checksum_bytes(config_text(to_key_values(config)));
  manifest.add_value("mean_ssim.nonuniform8421",
                     q6(bench.nonuniform.enhanced_summary.ssim.mean));
  manifest.add_value("mean_ssim.conventional",
                     q6(bench.conventional.enhanced_summary.ssim.mean));
  manifest.add_value("mean_ssim.delta", q6(bench.mean_ssim_delta));
  manifest.files.emplace_back("bench_report.csv", checksum_file(run_dir + "/bench_report.csv"));
  manifest.files.emplace_back("bench_report.json",
                              checksum_file(run_dir + "/bench_report.json"));
  manifest.files.emplace_back("nonuniform8421/manifest.txt",
                              checksum_file(run_dir + "/nonuniform8421/manifest.txt"));
  manifest.files.emplace_back("conventional/manifest.txt",
                              checksum_file(run_dir + "/conventional/manifest.txt"));
  write_manifest(manifest, run_dir + "/manifest.txt");
  return bench;
}

}  // namespace rtrecon
