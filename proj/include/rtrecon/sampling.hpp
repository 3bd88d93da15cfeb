#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rtrecon/grid.hpp"

namespace rtrecon {

enum class MaskProfile { kNonuniform8421, kConventionalUniform };

std::string to_string(MaskProfile p);
MaskProfile mask_profile_from_string(const std::string& s);

// Per-phase-encode-line acquisition pattern. lines[i] != 0 means acquired.
struct SamplingMask {
  std::vector<uint8_t> lines;
  int n_lines = 0;
  uint64_t seed = 0;
  MaskProfile profile = MaskProfile::kNonuniform8421;

  int acquired_count() const;
  std::vector<int> acquired_indices() const;
};

// Index ranges of the center block and the 4 peripheral sections per side,
// proximal (nearest center) first. Ranges are half-open [begin, end).
struct MaskLayout {
  int center_begin = 0;
  int center_count = 0;
  std::array<std::pair<int, int>, 4> left;   // proximal -> distal
  std::array<std::pair<int, int>, 4> right;  // proximal -> distal
};

// Partition geometry for an n-line acquisition: center = round-half-up(0.10 n)
// lines at [(n-c)/2, ...); each remaining half cut into 4 contiguous equal
// sections with remainder lines going to the proximal-most sections. The
// right half absorbs the odd line when n - c is odd.
MaskLayout compute_mask_layout(int n_lines);

// Variable-density mask: full center plus per-side section draws of
// round-half-up(rate * n) lines with rates 4%, 2%, 1%, 0.5% proximal to
// distal. Draw order: left sections proximal->distal, then right.
SamplingMask make_mask(int n_lines, uint64_t seed);

// Baseline: full center plus round-half-up(0.1667 * (n - center)) lines drawn
// uniformly from the pooled periphery.
SamplingMask make_conventional_mask(int n_lines, uint64_t seed);

// Zero every non-acquired line across all coils; acquired samples unchanged.
KSpaceGrid apply_mask(const KSpaceGrid& kspace, const SamplingMask& mask);

struct MaskStats {
  double acceleration = 0.0;
  int acquired_count = 0;
  int center_count = 0;
  int center_acquired = 0;
  std::array<int, 4> left_sections{};   // acquired per section, proximal -> distal
  std::array<int, 4> right_sections{};  // acquired per section, proximal -> distal
};

MaskStats mask_stats(const SamplingMask& mask);

// Exact round-half-up of num/den for nonnegative integers, den > 0.
int64_t round_half_up_ratio(int64_t num, int64_t den);

}  // namespace rtrecon
