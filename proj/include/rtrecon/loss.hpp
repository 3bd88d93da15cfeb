#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rtrecon/grid.hpp"
#include "rtrecon/metrics.hpp"

namespace rtrecon {

struct LossWeights {
  double alpha = 0.0001;  // content
  double beta = 1.0;      // L1
  double gamma = 100.0;   // 1 - mean ssim
  std::array<double, 4> theta = {0.001, 0.01, 2.0, 4.0};
};

// One multi-channel activation map.
struct FeatureBlock {
  int channels = 0, rows = 0, cols = 0;
  std::vector<double> data;  // [channel][row][col]

  double& at(int c, int r, int k) {
    return data[(static_cast<size_t>(c) * rows + r) * cols + k];
  }
  double at(int c, int r, int k) const {
    return data[(static_cast<size_t>(c) * rows + r) * cols + k];
  }
};

// Four fixed blocks of {16 3x3 filters (zero-padded), rectifier, 2x2 average
// pool}. Filter weights come from a seeded unit-variance stream scaled by
// 1/sqrt(fan-in); the extractor never trains.
class FeatureExtractor {
 public:
  static constexpr uint64_t kDefaultSeed = 73;
  static constexpr int kBlocks = 4;
  static constexpr int kFilters = 16;

  explicit FeatureExtractor(uint64_t seed = kDefaultSeed);
  // Externally supplied filter banks, one per block, each sized
  // out_channels * in_channels * 9 with out=16 and in=1 (block 0) or 16.
  explicit FeatureExtractor(std::vector<std::vector<double>> weights);

  std::array<FeatureBlock, kBlocks> forward(const RealImage& image) const;
  // d(loss)/d(image) given d(loss)/d(each block output).
  RealImage backward(const RealImage& image,
                     const std::array<FeatureBlock, kBlocks>& grads) const;

  const std::vector<double>& block_weights(int block) const { return weights_[block]; }

 private:
  int in_channels(int block) const { return block == 0 ? 1 : kFilters; }
  std::vector<std::vector<double>> weights_;  // per block [out][in][3][3]
};

struct LossValue {
  double value = 0.0;
  RealImage gradient;  // d(value)/d(pred)
};

// Sum over blocks of theta_i * ||F_ref(i) - F_pred(i)||^2 / elements(i).
LossValue content_loss(const RealImage& pred, const RealImage& ref,
                       const FeatureExtractor& extractor,
                       const std::array<double, 4>& theta);

// Mean absolute difference; subgradient uses sign(0) = 0.
LossValue l1_loss(const RealImage& pred, const RealImage& ref);

// alpha * content + beta * L1 + gamma * (1 - mean ssim).
LossValue composite_loss(const RealImage& pred, const RealImage& ref,
                         const LossWeights& weights, const FeatureExtractor& extractor);

}  // namespace rtrecon
