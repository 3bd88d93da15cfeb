#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace rtrecon {

// Dense real tensor, row-major with the last axis fastest. Network code uses
// [batch][channel][row][col]; multi-channel images use [channel][row][col].
// grad is either empty or data-sized.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    data.assign(n, fill);
  }

  size_t size() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[i]; }

  // [channel][row][col]
  double& at(int c, int r, int k) {
    return data[(static_cast<size_t>(c) * shape[1] + r) * shape[2] + k];
  }
  double at(int c, int r, int k) const {
    return data[(static_cast<size_t>(c) * shape[1] + r) * shape[2] + k];
  }

  // [batch][channel][row][col]
  double& at(int n, int c, int r, int k) {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + r) * shape[3] + k];
  }
  double at(int n, int c, int r, int k) const {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + r) * shape[3] + k];
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() { grad.assign(data.size(), 0.0); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace rtrecon
