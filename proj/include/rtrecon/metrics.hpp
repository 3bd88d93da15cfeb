#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rtrecon/grid.hpp"

namespace rtrecon {

// Binary high-frequency-component map from the edge detector.
struct EdgeMap {
  int rows = 0, cols = 0;
  double sigma = 0.0;
  std::vector<uint8_t> values;  // row-major, 0 or 1

  uint8_t at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
  int count() const;
  std::vector<std::pair<int, int>> pixels() const;
};

struct SsimParams {
  int window = 7;  // uniform square window, valid placements only
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 0.0;  // <= 0 means: use max of reference
};

struct SsimResult {
  double mean = 0.0;
  RealImage map;       // one value per valid window placement
  RealImage gradient;  // d(mean ssim)/d(pred), full image size
};

SsimResult ssim(const RealImage& pred, const RealImage& ref, const SsimParams& params = {});

// 10*log10(peak^2 / MSE), peak = max of ref. Equal images give +infinity.
double psnr(const RealImage& pred, const RealImage& ref);

// ||pred - ref||^2 / ||ref||^2.
double nmse(const RealImage& pred, const RealImage& ref);

// Separable Gaussian with 3-sigma truncation and replicate borders.
RealImage gaussian_smooth(const RealImage& im, double sigma);

// Gaussian smoothing, Sobel gradients, 4-direction non-maximum suppression,
// double-threshold hysteresis (high 0.2 and low 0.1 of max magnitude,
// 8-connected linking). Constant images give an empty map.
EdgeMap canny_edges(const RealImage& image, double sigma = 5.0);

// 2|R n Y| / (|R| + |Y|); both maps empty counts as perfect agreement (1).
double dice(const EdgeMap& r, const EdgeMap& y);

// Exact symmetric Hausdorff distance in pixels; both maps must be nonempty.
double hausdorff(const EdgeMap& r, const EdgeMap& y);

struct SliceMetrics {
  double ssim = 0.0;
  double psnr = 0.0;
  double nmse = 0.0;
  double dice_hfc = 0.0;
  std::optional<double> hausdorff_hfc;  // absent when an edge map is empty
};

SliceMetrics evaluate(const RealImage& pred, const RealImage& ref, double canny_sigma = 5.0);

struct Stat {
  int n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample std, n-1 denominator, 0 when n < 2
};

struct MetricsSummary {
  Stat ssim, psnr, nmse, dice_hfc, hausdorff_hfc;
};

MetricsSummary aggregate(const std::vector<SliceMetrics>& slices);

}  // namespace rtrecon
