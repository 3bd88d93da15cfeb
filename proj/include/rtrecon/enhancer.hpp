#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rtrecon/augment.hpp"
#include "rtrecon/loss.hpp"
#include "rtrecon/rng.hpp"
#include "rtrecon/tensor.hpp"

namespace rtrecon {

struct NetworkConfig {
  int depth = 3;          // encoder levels; pooling depth-1 times
  int base_filters = 8;   // filters at the top level, doubling per level
  double dropout_rate = 0.05;
  int input_channels = 2;  // virtual-coil magnitude channels
};

void validate(const NetworkConfig& config);

struct TrainConfig {
  int batch_size = 128;
  double initial_lr = 0.0003;
  double plateau_factor = 0.5;
  int plateau_patience = 10;
  int early_stop_patience = 25;
  int max_epochs = 250;
  uint64_t seed = 1;
  double split_fraction = 0.8;  // training share, remainder validates
};

void validate(const TrainConfig& config);

// ---- layers; each forward caches what its own backward needs ----

struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 3;
  Tensor w;  // [out][in][k][k]
  Tensor b;  // [out]

  void init(int in, int out, int k, Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gout);  // accumulates w.grad / b.grad

 private:
  Tensor x_;
};

// Per-channel statistics over batch and spatial axes; biased variance both
// for normalization and for the running estimate. Train mode needs batch >= 2
// and is the only mode backward supports.
struct BatchNorm2d {
  double eps = 1e-5, momentum = 0.1;
  Tensor gamma, beta;  // [C]
  Tensor running_mean, running_var;

  void init(int channels);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gout);

 private:
  Tensor xhat_;
  std::vector<double> inv_std_;
};

struct PReLU {
  Tensor a;  // [C] negative slope, init 0.25

  void init(int channels);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gout);

 private:
  Tensor x_;
};

// Inverted dropout: kept activations scale by 1/(1-rate); eval is identity.
struct Dropout {
  double rate = 0.0;

  Tensor forward(const Tensor& x, bool train, Rng* rng);
  Tensor backward(const Tensor& gout);

 private:
  std::vector<uint8_t> keep_;
  double scale_ = 1.0;
  bool identity_ = true;
};

struct MaxPool2d {  // 2x2, stride 2; ties keep the first in scan order
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gout);

 private:
  std::vector<size_t> argmax_;
  std::vector<int> in_shape_;
};

Tensor upsample_nearest2x(const Tensor& x);
Tensor upsample_nearest2x_backward(const Tensor& gout);

// Two rounds of {conv 3x3, batch norm, rectifier, dropout}.
struct ConvBlock {
  Conv2d conv1, conv2;
  BatchNorm2d bn1, bn2;
  PReLU act1, act2;
  Dropout drop1, drop2;

  void init(int in, int out, double dropout_rate, Rng& rng);
  Tensor forward(const Tensor& x, bool train, Rng* rng);
  Tensor backward(const Tensor& gout);
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool trainable;  // false for batch-norm running statistics
};

// U-shaped residual enhancer: encoder conv blocks with 2x2 max pooling and
// filters doubling per level, an extra conv block with an identity shortcut
// after the deepest encoder block, and a decoder of nearest-neighbor
// upsampling + channel-halving conv, skip concatenation (skip channels
// first), and a conv block per level; a final 1x1 convolution maps to one
// channel, linear.
class Enhancer {
 public:
  Enhancer() = default;
  Enhancer(const NetworkConfig& config, uint64_t seed);

  // x: [batch][input_channels][H][W] with H, W divisible by 2^(depth-1).
  // Train mode requires batch >= 2 and an rng when dropout_rate > 0.
  Tensor forward(const Tensor& x, bool train = false, Rng* dropout_rng = nullptr);
  // gout: [batch][1][H][W]; fills parameter grads, returns d(loss)/d(input).
  // Must follow a train-mode forward.
  Tensor backward(const Tensor& gout);

  std::vector<ParamRef> parameters();  // trainable tensors + running stats
  void zero_grad();
  size_t parameter_count();  // trainable scalars
  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  std::vector<ConvBlock> enc_;     // depth
  std::vector<MaxPool2d> pools_;   // depth-1
  ConvBlock bottleneck_;           // residual-wrapped
  std::vector<Conv2d> upconvs_;    // depth-1, indexed by decoder level
  std::vector<ConvBlock> dec_;     // depth-1, indexed by decoder level
  Conv2d final_;
  std::vector<Tensor> skips_;
};

// Per-channel min-max scales fitted on a dataset; constant channels keep
// min == max and normalize to zero.
struct NormalizationScales {
  std::vector<double> input_min, input_max;
  double ref_min = 0.0, ref_max = 1.0;
};

NormalizationScales fit_normalization(const std::vector<TrainingPair>& dataset);
Tensor normalize_input(const Tensor& input, const NormalizationScales& scales);
Tensor denormalize_input(const Tensor& input, const NormalizationScales& scales);
RealImage normalize_reference(const RealImage& ref, const NormalizationScales& scales);
RealImage denormalize_output(const RealImage& out, const NormalizationScales& scales);

// Adam over the trainable parameters; step() consumes the current grads.
class Adam {
 public:
  explicit Adam(std::vector<ParamRef> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

// Reduce-on-plateau plus early stopping driven by validation losses. After
// plateau_patience consecutive non-improving epochs the rate is multiplied by
// factor (counter resets); after early_stop_patience it signals a stop.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int plateau_patience, int early_stop_patience);
  void observe(double val_loss);
  double lr() const { return lr_; }
  bool should_stop() const { return stop_; }
  int best_epoch() const { return best_epoch_; }  // 1-based; 0 before any
  double best_loss() const { return best_; }

 private:
  double lr_, factor_;
  int plateau_patience_, early_patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int epoch_ = 0, best_epoch_ = 0, bad_plateau_ = 0, bad_early_ = 0;
  bool stop_ = false;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Enhancer net;
  NormalizationScales scales;
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

// Deterministic per seed. The dataset is shuffled once for the train/val
// split and re-shuffled per epoch; an undersized trailing batch folds into
// the previous one so batch-norm always sees at least two samples. When the
// split leaves no validation samples the training set validates.
TrainResult train(const std::vector<TrainingPair>& dataset, const NetworkConfig& net_config,
                  const TrainConfig& train_config, const LossWeights& loss_weights = {});

}  // namespace rtrecon
