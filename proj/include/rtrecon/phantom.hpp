#pragma once

#include <cstdint>
#include <vector>

#include "rtrecon/grid.hpp"

namespace rtrecon {

struct CoilSpec {
  double center_row = 0.5;  // normalized [0,1]
  double center_col = 0.5;
  double radius = 0.5;  // Gaussian falloff scale, normalized units
  double gain = 1.0;
  double noise_sigma = 0.0;  // k-space noise, intensity units
};

struct CoilLayout {
  std::vector<CoilSpec> coils;
  int n_coils() const { return static_cast<int>(coils.size()); }
};

void validate(const CoilLayout& layout);

// 12-channel arrangement with imbalanced channel SNR: 4 low-noise anterior
// loop channels and 8 noisier posterior channels.
CoilLayout default_rt_layout();

// Evenly spread ring of n equal coils, low noise; handy for small tests.
CoilLayout ring_layout(int n_coils, double radius = 0.6, double noise_sigma = 0.0);

struct EllipseSpec {
  double intensity;  // additive
  double a, b;       // semi-axes, normalized to [-1,1] frame
  double x0, y0;     // center
  double phi_deg;    // rotation, degrees counterclockwise
};

// The classic 10-ellipse head phantom parameter table.
const std::vector<EllipseSpec>& shepp_logan_ellipses();

// Per-pixel ellipse-membership sum, clipped at 0, max scaled to 1.
RealImage shepp_logan(int rows, int cols);

// Same renderer with jittered ellipse parameters for multi-slice datasets.
RealImage shepp_logan_jittered(int rows, int cols, uint64_t seed, uint64_t slice);

// Complex sensitivity of one coil at a pixel: magnitude gain*exp(-d^2/2r^2)
// with a linear phase ramp tied to the coil-center offset.
cplx coil_sensitivity(const CoilSpec& coil, int row, int col, int rows, int cols);

// Pointwise image * sensitivity per coil; no noise.
CoilImageStack simulate_coils(const RealImage& image, const CoilLayout& layout);

// fft2 per coil plus circular complex Gaussian noise, per-channel sigma.
KSpaceGrid to_kspace_with_noise(const CoilImageStack& stack, const CoilLayout& layout,
                                uint64_t seed);

}  // namespace rtrecon
