#pragma once

#include <complex>
#include <vector>

#include "rtrecon/errors.hpp"

namespace rtrecon {

using cplx = std::complex<double>;

// Axis carrying phase-encode lines. Default is axis 1 (columns): for a
// 256x192 acquisition the 192-axis is undersampled.
enum class LineAxis : int { kRows = 0, kCols = 1 };

constexpr LineAxis kDefaultLineAxis = LineAxis::kCols;

// Multi-coil complex 2-D frequency-domain samples, [coil][row][col] row-major.
class KSpaceGrid {
 public:
  KSpaceGrid(int n_coils, int rows, int cols, LineAxis line_axis = kDefaultLineAxis);

  int n_coils() const { return n_coils_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  LineAxis line_axis() const { return line_axis_; }
  void set_line_axis(LineAxis a) { line_axis_ = a; }
  int n_lines() const { return line_axis_ == LineAxis::kCols ? cols_ : rows_; }
  int n_read() const { return line_axis_ == LineAxis::kCols ? rows_ : cols_; }

  cplx& at(int coil, int row, int col) { return data_[index(coil, row, col)]; }
  const cplx& at(int coil, int row, int col) const { return data_[index(coil, row, col)]; }

  // (coil, line, read) view along the configured line axis.
  cplx& at_line(int coil, int line, int read) {
    return line_axis_ == LineAxis::kCols ? at(coil, read, line) : at(coil, line, read);
  }
  const cplx& at_line(int coil, int line, int read) const {
    return line_axis_ == LineAxis::kCols ? at(coil, read, line) : at(coil, line, read);
  }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }
  size_t size() const { return data_.size(); }

  bool all_finite() const;
  void require_finite(const char* what) const;

 private:
  size_t index(int coil, int row, int col) const {
    return (static_cast<size_t>(coil) * rows_ + row) * cols_ + col;
  }
  int n_coils_, rows_, cols_;
  LineAxis line_axis_;
  std::vector<cplx> data_;
};

// Per-coil complex images; one-to-one with a KSpaceGrid under ifft2/fft2.
// Same storage contract as KSpaceGrid.
class CoilImageStack {
 public:
  CoilImageStack(int n_coils, int rows, int cols, LineAxis line_axis = kDefaultLineAxis);

  int n_coils() const { return n_coils_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  LineAxis line_axis() const { return line_axis_; }
  void set_line_axis(LineAxis a) { line_axis_ = a; }

  cplx& at(int coil, int row, int col) { return data_[index(coil, row, col)]; }
  const cplx& at(int coil, int row, int col) const { return data_[index(coil, row, col)]; }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }
  size_t size() const { return data_.size(); }

  bool all_finite() const;
  void require_finite(const char* what) const;

 private:
  size_t index(int coil, int row, int col) const {
    return (static_cast<size_t>(coil) * rows_ + row) * cols_ + col;
  }
  int n_coils_, rows_, cols_;
  LineAxis line_axis_;
  std::vector<cplx> data_;
};

// Real 2-D image, [row][col] row-major, normalized intensity units.
class RealImage {
 public:
  RealImage() : rows_(0), cols_(0) {}
  RealImage(int rows, int cols, double fill = 0.0);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& at(int row, int col) { return data_[static_cast<size_t>(row) * cols_ + col]; }
  double at(int row, int col) const { return data_[static_cast<size_t>(row) * cols_ + col]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  size_t size() const { return data_.size(); }

  double max_value() const;
  double min_value() const;
  bool all_finite() const;

 private:
  int rows_, cols_;
  std::vector<double> data_;
};

// Centered orthonormal 2-D Fourier transforms, per coil. Zero frequency sits
// at (rows/2, cols/2); both directions scale by 1/sqrt(rows*cols), so the
// pair is unitary (Parseval holds exactly up to roundoff).
KSpaceGrid fft2(const CoilImageStack& images);
CoilImageStack ifft2(const KSpaceGrid& kspace);

// Per-pixel sqrt(sum over coils of |value|^2).
RealImage rss_combine(const CoilImageStack& images);

double norm2(const KSpaceGrid& g);
double norm2(const CoilImageStack& s);
double norm2(const RealImage& im);

}  // namespace rtrecon
