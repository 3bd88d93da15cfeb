#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtrecon/augment.hpp"
#include "rtrecon/coilcomp.hpp"
#include "rtrecon/enhancer.hpp"
#include "rtrecon/grappa.hpp"
#include "rtrecon/grid.hpp"
#include "rtrecon/io.hpp"
#include "rtrecon/loss.hpp"
#include "rtrecon/metrics.hpp"
#include "rtrecon/sampling.hpp"

namespace rtrecon {

// End-to-end settings. The enhancer consumes one channel per virtual coil, so
// network.input_channels is always forced to n_virtual.
struct PipelineConfig {
  MaskProfile mask_profile = MaskProfile::kNonuniform8421;
  uint64_t mask_seed = 1;

  GrappaConfig grappa;
  int acs_lines = 0;  // 0 = self-calibrate on the full retrospective grid

  int n_virtual = 2;
  // fill on physical coils then compress (default), or compress first and
  // fill on virtual coils, which is what the fill-time saving implies
  bool compress_first = false;

  uint64_t augment_seed = 5;
  AugmentRecipe recipe;

  NetworkConfig network;
  TrainConfig training;
  LossWeights loss;

  // dataset source: a directory of saved k-space grids, or, when empty, a
  // synthetic multi-coil phantom stack generated from the fields below
  std::string dataset_dir;
  int n_slices = 20;
  int rows = 64, cols = 48;
  int n_coils = 12;
  uint64_t phantom_seed = 7;

  double canny_sigma = 5.0;
};

void validate(const PipelineConfig& config);

// Flat key=value form; unknown keys are usage errors, absent keys keep their
// defaults. to_key_values emits every key, so the round trip is exact and the
// canonical text is what the run manifest hashes.
PipelineConfig pipeline_config_from(const KeyValueConfig& kv);
KeyValueConfig to_key_values(const PipelineConfig& config);

// Load the dataset the config describes: files `slice<i>.kspace` from
// dataset_dir, or the jittered-phantom stack.
std::vector<KSpaceGrid> load_dataset(const PipelineConfig& config);

// Per-run reconstruction artifacts. Kernels are calibrated on the full
// retrospective grid (ACS = acs_lines centered, or the whole line range when
// acs_lines is 0); the compression matrix is fit on the GRAPPA-filled masked
// grid so inference needs no fully sampled data.
struct ReconArtifacts {
  SamplingMask mask;
  GrappaKernelSet kernels;
  CompressionMatrix compression;
};

ReconArtifacts make_artifacts(const KSpaceGrid& full, const SamplingMask& mask,
                              const PipelineConfig& config);

// Stage chain 3-5 for one slice: fill, compress, inverse transform.
struct SliceRecon {
  Tensor input;               // [n_virtual][rows][cols] coil magnitudes
  RealImage grappa_rss;       // RSS over virtual coils after the fill
  RealImage zero_filled_rss;  // RSS over virtual coils without the fill
};

SliceRecon reconstruct_slice(const KSpaceGrid& masked, const ReconArtifacts& artifacts,
                             bool compress_first);

struct PreparedDataset {
  SamplingMask mask;
  std::vector<TrainingPair> pairs;     // recipe-many per surviving slice
  std::vector<int> slice_indices;      // surviving source slices
  std::vector<RealImage> references;   // per surviving slice
  std::vector<SliceRecon> recons;      // per surviving slice
  std::vector<std::string> errors;     // diagnostics for skipped slices
};

// Pipeline stages 1-5 (mask through reconstruction) plus augmentation, per
// slice; a failing slice is logged and skipped.
PreparedDataset prepare_training_set(const std::vector<KSpaceGrid>& slices,
                                     const PipelineConfig& config, int threads = 1);

// Epoch losses and learning rates as "epoch,train_loss,val_loss,lr" rows.
void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

// Normalized eval-mode forward pass of one reconstructed input.
RealImage enhance(const Tensor& input, Enhancer& net, const NormalizationScales& scales);

// Fill / compress / reconstruct / enhance for prospectively undersampled
// data.
RealImage infer(const KSpaceGrid& masked, const ReconArtifacts& artifacts, Enhancer& net,
                const NormalizationScales& scales, bool compress_first = false,
                RealImage* grappa_rss_out = nullptr);

struct PipelineRunResult {
  std::string run_dir;
  SamplingMask mask;
  TrainResult training;
  std::vector<int> slice_indices;
  std::vector<SliceMetrics> zero_filled, grappa, enhanced;  // per surviving slice
  MetricsSummary zero_filled_summary, grappa_summary, enhanced_summary;
  std::vector<std::string> errors;
};

// Full pipeline into run_dir: artifacts, weights, history, one report per
// reconstruction arm, and a checksummed manifest (all paths run_dir-relative
// so reruns are byte-comparable).
PipelineRunResult run(const PipelineConfig& config, const std::string& run_dir,
                      int threads = 1);

struct BenchResult {
  PipelineRunResult nonuniform;
  PipelineRunResult conventional;
  double mean_ssim_delta = 0.0;  // nonuniform - conventional, enhanced images
};

// The identical pipeline under both sampling profiles, plus a paired report.
BenchResult benchmark_masks(const PipelineConfig& config, const std::string& run_dir,
                            int threads = 1);

}  // namespace rtrecon
