#pragma once

#include <string>
#include <vector>

#include "rtrecon/grid.hpp"
#include "rtrecon/sampling.hpp"

namespace rtrecon {

struct GrappaConfig {
  int n_source_lines_per_side = 1;
  int kx_taps = 5;  // odd readout-direction taps
  double lambda_rel = 1e-4;  // ridge scale, relative to mean diag of the normal matrix
};

// One interpolation pattern: line offsets of the source lines relative to the
// target (negative above, positive below) plus the readout tap count. Interior
// targets get one offset per side; a target with no acquired line on one side
// gets twice as many from the available side.
struct KernelGeometry {
  std::vector<int> source_offsets;  // sorted ascending, never contains 0
  int kx_taps = 5;

  int gap_up() const;    // distance to nearest source above, 0 if one-sided below
  int gap_down() const;  // distance to nearest source below, 0 if one-sided above
  std::string describe() const;

  bool operator==(const KernelGeometry& o) const = default;
  bool operator<(const KernelGeometry& o) const;
};

struct GrappaKernel {
  KernelGeometry geometry;
  // [target_coil][source_coil][source_line][tap] flattened; feature index
  // f = (source_coil * n_offsets + offset_idx) * kx_taps + tap.
  std::vector<cplx> weights;
  double residual = 0.0;  // relative calibration residual, Frobenius
};

struct GrappaKernelSet {
  std::vector<GrappaKernel> kernels;  // sorted by geometry
  GrappaConfig config;
  int n_coils = 0;
  int acs_begin = 0;  // calibration line range, half-open
  int acs_end = 0;

  const GrappaKernel* find(const KernelGeometry& g) const;
};

// Source offsets the fill step would use for missing line `line`.
std::vector<int> source_offsets_for_line(const SamplingMask& mask, int line,
                                         const GrappaConfig& config);

// Distinct geometries over all missing lines of the mask, sorted.
std::vector<KernelGeometry> enumerate_geometries(const SamplingMask& mask,
                                                 const GrappaConfig& config);

// Ridge least-squares fit of each geometry over all sliding windows whose
// target and sources lie inside [acs_begin, acs_end) along the line axis.
// Readout taps use interior columns only.
GrappaKernelSet calibrate(const KSpaceGrid& kspace, int acs_begin, int acs_end,
                          const std::vector<KernelGeometry>& geometries,
                          const GrappaConfig& config);

// Estimate every missing line from its sources; acquired lines are copied
// bit-for-bit. Out-of-range readout taps contribute zero.
KSpaceGrid fill(const KSpaceGrid& kspace_masked, const SamplingMask& mask,
                const GrappaKernelSet& kernels);

// Smallest consecutive fully-sampled line span that admits at least one
// calibration window for every geometry.
int min_acs_span(const std::vector<KernelGeometry>& geometries);

}  // namespace rtrecon
