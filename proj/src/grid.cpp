#include "rtrecon/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <string>

namespace rtrecon {

namespace {

void check_dims(int n_coils, int rows, int cols) {
  if (n_coils < 1) throw ValidationError("n_coils must be >= 1, got " + std::to_string(n_coils));
  if (rows < 8 || cols < 8)
    throw ValidationError("grid must be at least 8x8, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
}

bool finite_span(const std::vector<cplx>& v) {
  for (const cplx& z : v)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

// FFTW planning is not thread-safe; execution of a ready plan is.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

// One centered orthonormal 2-D transform of every coil plane. sign is
// FFTW_FORWARD or FFTW_BACKWARD. The center shift is folded into index
// arithmetic on copy-in/copy-out rather than done as separate passes.
void centered_transform(const std::vector<cplx>& src, std::vector<cplx>& dst, int n_coils,
                        int rows, int cols, int sign) {
  const size_t plane = static_cast<size_t>(rows) * cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(plane));
  // Copy-in applies ifftshift (buf[m] = in[(m + floor(n/2)) mod n]), copy-out
  // applies fftshift (out[(m + floor(n/2)) mod n] = buf[m]); the two are
  // exact inverses even for odd sizes.
  const int rsh_in = rows / 2, csh_in = cols / 2;
  const int rsh_out = rows / 2, csh_out = cols / 2;

  fftw_complex* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * plane));
  if (!buf) throw std::bad_alloc();
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_2d(rows, cols, buf, buf, sign, FFTW_ESTIMATE);
  }
  if (!plan) {
    fftw_free(buf);
    throw ValidationError("fftw plan creation failed");
  }

  for (int c = 0; c < n_coils; ++c) {
    const cplx* in = src.data() + c * plane;
    cplx* out = dst.data() + c * plane;
    for (int r = 0; r < rows; ++r) {
      const int rr = (r + rsh_in) % rows;
      for (int k = 0; k < cols; ++k) {
        const int kk = (k + csh_in) % cols;
        const cplx& z = in[static_cast<size_t>(rr) * cols + kk];
        buf[static_cast<size_t>(r) * cols + k][0] = z.real();
        buf[static_cast<size_t>(r) * cols + k][1] = z.imag();
      }
    }
    fftw_execute(plan);
    for (int r = 0; r < rows; ++r) {
      const int rr = (r + rsh_out) % rows;
      for (int k = 0; k < cols; ++k) {
        const int kk = (k + csh_out) % cols;
        const fftw_complex& z = buf[static_cast<size_t>(r) * cols + k];
        out[static_cast<size_t>(rr) * cols + kk] = cplx(z[0] * scale, z[1] * scale);
      }
    }
  }

  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
}

}  // namespace

KSpaceGrid::KSpaceGrid(int n_coils, int rows, int cols, LineAxis line_axis)
    : n_coils_(n_coils), rows_(rows), cols_(cols), line_axis_(line_axis) {
  check_dims(n_coils, rows, cols);
  data_.assign(static_cast<size_t>(n_coils) * rows * cols, cplx(0.0, 0.0));
}

bool KSpaceGrid::all_finite() const { return finite_span(data_); }

void KSpaceGrid::require_finite(const char* what) const {
  if (!all_finite()) throw ValidationError(std::string(what) + ": non-finite k-space sample");
}

CoilImageStack::CoilImageStack(int n_coils, int rows, int cols, LineAxis line_axis)
    : n_coils_(n_coils), rows_(rows), cols_(cols), line_axis_(line_axis) {
  check_dims(n_coils, rows, cols);
  data_.assign(static_cast<size_t>(n_coils) * rows * cols, cplx(0.0, 0.0));
}

bool CoilImageStack::all_finite() const { return finite_span(data_); }

void CoilImageStack::require_finite(const char* what) const {
  if (!all_finite()) throw ValidationError(std::string(what) + ": non-finite image sample");
}

RealImage::RealImage(int rows, int cols, double fill) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1)
    throw ValidationError("image dims must be positive, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  data_.assign(static_cast<size_t>(rows) * cols, fill);
}

double RealImage::max_value() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::max(m, v);
  return m;
}

double RealImage::min_value() const {
  double m = data_.empty() ? 0.0 : data_[0];
  for (double v : data_) m = std::min(m, v);
  return m;
}

bool RealImage::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

KSpaceGrid fft2(const CoilImageStack& images) {
  images.require_finite("fft2");
  KSpaceGrid out(images.n_coils(), images.rows(), images.cols(), images.line_axis());
  centered_transform(images.data(), out.data(), images.n_coils(), images.rows(), images.cols(),
                     FFTW_FORWARD);
  return out;
}

CoilImageStack ifft2(const KSpaceGrid& kspace) {
  kspace.require_finite("ifft2");
  CoilImageStack out(kspace.n_coils(), kspace.rows(), kspace.cols(), kspace.line_axis());
  centered_transform(kspace.data(), out.data(), kspace.n_coils(), kspace.rows(), kspace.cols(),
                     FFTW_BACKWARD);
  return out;
}

RealImage rss_combine(const CoilImageStack& images) {
  images.require_finite("rss_combine");
  RealImage out(images.rows(), images.cols());
  const size_t plane = static_cast<size_t>(images.rows()) * images.cols();
  for (int c = 0; c < images.n_coils(); ++c) {
    const cplx* p = images.data().data() + c * plane;
    for (size_t i = 0; i < plane; ++i) out.data()[i] += std::norm(p[i]);
  }
  for (size_t i = 0; i < plane; ++i) out.data()[i] = std::sqrt(out.data()[i]);
  return out;
}

double norm2(const KSpaceGrid& g) {
  double s = 0.0;
  for (const cplx& z : g.data()) s += std::norm(z);
  return s;
}

double norm2(const CoilImageStack& s) {
  double t = 0.0;
  for (const cplx& z : s.data()) t += std::norm(z);
  return t;
}

double norm2(const RealImage& im) {
  double t = 0.0;
  for (double v : im.data()) t += v * v;
  return t;
}

}  // namespace rtrecon
