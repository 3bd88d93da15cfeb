#include "rtrecon/coilcomp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "rtrecon/errors.hpp"

namespace rtrecon {

void validate(const CompressionMatrix& m) {
  if (m.n_virtual < 1 || m.n_virtual > m.n_physical)
    throw ValidationError("compression matrix needs 1 <= n_virtual <= n_physical");
  if (static_cast<int>(m.weights.size()) != m.n_virtual * m.n_physical)
    throw ValidationError("compression matrix weight size mismatch");
  if (static_cast<int>(m.singular_values.size()) != m.n_physical)
    throw ValidationError("compression matrix must carry all physical singular values");
  for (size_t i = 0; i + 1 < m.singular_values.size(); ++i)
    if (m.singular_values[i] < m.singular_values[i + 1] - 1e-12)
      throw ValidationError("singular values must be descending");
  for (double s : m.singular_values)
    if (!(s >= 0.0)) throw ValidationError("singular values must be nonnegative");
  for (int a = 0; a < m.n_virtual; ++a)
    for (int b = 0; b <= a; ++b) {
      cplx dot(0, 0);
      for (int p = 0; p < m.n_physical; ++p) dot += m.w(a, p) * std::conj(m.w(b, p));
      const cplx want = a == b ? cplx(1, 0) : cplx(0, 0);
      if (std::abs(dot - want) > 1e-6)
        throw ValidationError("compression rows are not orthonormal");
    }
}

CompressionMatrix fit_compression(const KSpaceGrid& kspace, int n_virtual) {
  const int nc = kspace.n_coils();
  if (n_virtual < 1 || n_virtual > nc)
    throw ValidationError("n_virtual must be in [1, " + std::to_string(nc) + "], got " +
                          std::to_string(n_virtual));
  kspace.require_finite("fit_compression");

  // Coil covariance C = sum over samples of d d^H; eigendecomposition of C
  // gives the left singular directions of the coils x samples matrix.
  const size_t plane = static_cast<size_t>(kspace.rows()) * kspace.cols();
  Eigen::MatrixXcd cov = Eigen::MatrixXcd::Zero(nc, nc);
  for (size_t i = 0; i < plane; ++i) {
    for (int p = 0; p < nc; ++p) {
      const cplx dp = kspace.data()[p * plane + i];
      cov(p, p) += std::norm(dp);
      for (int q = p + 1; q < nc; ++q) {
        const cplx v = dp * std::conj(kspace.data()[q * plane + i]);
        cov(p, q) += v;
        cov(q, p) += std::conj(v);
      }
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(cov);
  if (es.info() != Eigen::Success) throw ValidationError("coil covariance eigensolve failed");
  const double total = cov.real().trace();
  if (!(total > 0.0)) throw ValidationError("fit_compression: zero-energy k-space");

  CompressionMatrix m;
  m.n_virtual = n_virtual;
  m.n_physical = nc;
  m.singular_values.resize(nc);
  m.weights.assign(static_cast<size_t>(n_virtual) * nc, cplx(0, 0));
  // Eigen sorts ascending; emit descending.
  for (int k = 0; k < nc; ++k)
    m.singular_values[k] = std::sqrt(std::max(0.0, es.eigenvalues()(nc - 1 - k)));
  for (int v = 0; v < n_virtual; ++v) {
    Eigen::VectorXcd u = es.eigenvectors().col(nc - 1 - v);
    // Row of W maps coil vector d to u^H d.
    for (int p = 0; p < nc; ++p) m.w(v, p) = std::conj(u(p));
    // Phase fix: rotate the row so its largest-magnitude entry is real
    // positive; ties broken by lowest coil index.
    int arg = 0;
    for (int p = 1; p < nc; ++p)
      if (std::abs(m.w(v, p)) > std::abs(m.w(v, arg))) arg = p;
    const double mag = std::abs(m.w(v, arg));
    if (mag > 0.0) {
      const cplx rot = std::conj(m.w(v, arg)) / mag;
      for (int p = 0; p < nc; ++p) m.w(v, p) *= rot;
    }
  }
  validate(m);
  return m;
}

namespace {

template <typename Stack>
Stack apply_impl(const Stack& in, const CompressionMatrix& m) {
  validate(m);
  if (m.n_physical != in.n_coils())
    throw ValidationError("compression matrix expects " + std::to_string(m.n_physical) +
                          " coils, input has " + std::to_string(in.n_coils()));
  Stack out(m.n_virtual, in.rows(), in.cols(), in.line_axis());
  const size_t plane = static_cast<size_t>(in.rows()) * in.cols();
  for (int v = 0; v < m.n_virtual; ++v)
    for (int p = 0; p < m.n_physical; ++p) {
      const cplx w = m.w(v, p);
      if (w == cplx(0, 0)) continue;
      const cplx* src = in.data().data() + p * plane;
      cplx* dst = out.data().data() + v * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] += w * src[i];
    }
  return out;
}

}  // namespace

KSpaceGrid apply_compression(const KSpaceGrid& kspace, const CompressionMatrix& m) {
  return apply_impl(kspace, m);
}

CoilImageStack apply_compression(const CoilImageStack& images, const CompressionMatrix& m) {
  return apply_impl(images, m);
}

std::vector<double> energy_profile(const CompressionMatrix& m) {
  double total = 0.0;
  for (double s : m.singular_values) total += s * s;
  if (!(total > 0.0)) throw ValidationError("energy_profile: zero total energy");
  std::vector<double> profile(m.singular_values.size());
  double acc = 0.0;
  for (size_t i = 0; i < profile.size(); ++i) {
    acc += m.singular_values[i] * m.singular_values[i];
    profile[i] = acc / total;
  }
  return profile;
}

}  // namespace rtrecon
