#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtrecon/grid.hpp"
#include "rtrecon/tensor.hpp"

namespace rtrecon {

enum class TransformKind {
  kIdentity,
  kHFlip,
  kDropout,
  kGaussianNoise,
  kGaussianBlur,
  kPiecewiseAffine,
  kElastic,
  kAffine,
  kRotation,
};

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);

// One fully determined augmentation. Field meaning depends on kind; unused
// fields keep their defaults. Accepted ranges: dropout rate [0.01, 0.05];
// noise scale [0, 12.75] on the 0..255 intensity scale (divided by 255 when
// applied to unit-range images); blur sigma [0.8, 1.5]; piecewise-affine
// scale [0.01, 0.07]; elastic alpha 0 (no displacement, calibration only) or
// [2.5, 50] with sigma [1, 11]; affine angle within ±20° with zoom [0.7, 1.5]
// and shift within ±0.0001 of the image extent; rotation angle within ±30°.
struct TransformSpec {
  TransformKind kind = TransformKind::kIdentity;
  uint64_t seed = 0;
  double rate = 0.0;        // dropout
  double scale = 0.0;       // noise std or piecewise-affine node scale
  double sigma = 0.0;       // blur / elastic smoothing
  double alpha = 0.0;       // elastic displacement RMS in pixels
  double angle_deg = 0.0;   // affine / rotation
  double zoom = 1.0;        // affine isotropic scale
  double shift_frac = 0.0;  // affine translation as a fraction of extent
};

void validate_spec(const TransformSpec& spec);

// One supervised sample: per-virtual-coil magnitude channels plus the fully
// sampled combined reference.
struct TrainingPair {
  Tensor input;         // [channels][rows][cols]
  RealImage reference;  // same spatial shape
};

void validate_pair(const TrainingPair& pair);

// Variants per kind; the defaults produce 19 transformed pairs per source
// pair. include_identity prepends an untransformed copy on top of those.
struct AugmentRecipe {
  int hflip = 1;
  int dropout = 2;
  int gaussian_noise = 3;
  int gaussian_blur = 2;
  int piecewise_affine = 3;
  int elastic = 3;
  int affine = 3;
  int rotation = 2;
  bool include_identity = false;
};

// Deterministic per seed: parameters drawn uniformly from the ranges above,
// one private noise seed per spec.
std::vector<TransformSpec> build_plan(uint64_t seed, const AugmentRecipe& recipe = {});

// Geometric kinds (hflip, piecewise_affine, elastic, affine, rotation) warp
// all input channels and the reference identically (bilinear backward warp,
// zero padding outside); photometric kinds (dropout, gaussian_noise,
// gaussian_blur) touch the input only, with one mask / noise field shared by
// every channel. Same (pair, spec) gives bit-identical output.
TrainingPair apply_transform(const TrainingPair& pair, const TransformSpec& spec);

}  // namespace rtrecon
