#pragma once

#include <vector>

#include "rtrecon/grid.hpp"

namespace rtrecon {

// Rows are the top left-singular directions of the coils x samples data
// matrix, orthonormal, one per virtual coil. singular_values keeps all
// n_physical values (descending) so energy profiles cover the full sweep.
struct CompressionMatrix {
  int n_virtual = 0;
  int n_physical = 0;
  std::vector<cplx> weights;  // [n_virtual][n_physical] row-major
  std::vector<double> singular_values;

  cplx& w(int v, int p) { return weights[static_cast<size_t>(v) * n_physical + p]; }
  const cplx& w(int v, int p) const { return weights[static_cast<size_t>(v) * n_physical + p]; }
};

void validate(const CompressionMatrix& m);

// SVD fit over all k-space samples. Each row is phase-fixed so its
// largest-magnitude entry is real positive.
CompressionMatrix fit_compression(const KSpaceGrid& kspace, int n_virtual);

// Per-sample linear map to n_virtual channels.
KSpaceGrid apply_compression(const KSpaceGrid& kspace, const CompressionMatrix& m);
CoilImageStack apply_compression(const CoilImageStack& images, const CompressionMatrix& m);

// Cumulative squared-singular-value fractions, one entry per physical coil.
std::vector<double> energy_profile(const CompressionMatrix& m);

}  // namespace rtrecon
