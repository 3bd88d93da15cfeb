#include "rtrecon/grappa.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

#include "rtrecon/errors.hpp"

namespace rtrecon {

int KernelGeometry::gap_up() const {
  int best = 0;
  for (int o : source_offsets)
    if (o < 0 && (best == 0 || -o < best)) best = -o;
  return best;
}

int KernelGeometry::gap_down() const {
  int best = 0;
  for (int o : source_offsets)
    if (o > 0 && (best == 0 || o < best)) best = o;
  return best;
}

std::string KernelGeometry::describe() const {
  std::string s = "geometry [";
  for (size_t i = 0; i < source_offsets.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(source_offsets[i]);
  }
  s += "] (gap_up=" + std::to_string(gap_up()) + ", gap_down=" + std::to_string(gap_down()) +
       ", kx_taps=" + std::to_string(kx_taps) + ")";
  return s;
}

bool KernelGeometry::operator<(const KernelGeometry& o) const {
  if (source_offsets != o.source_offsets) return source_offsets < o.source_offsets;
  return kx_taps < o.kx_taps;
}

const GrappaKernel* GrappaKernelSet::find(const KernelGeometry& g) const {
  for (const GrappaKernel& k : kernels)
    if (k.geometry == g) return &k;
  return nullptr;
}

namespace {

void check_config(const GrappaConfig& c) {
  if (c.kx_taps < 1 || c.kx_taps % 2 == 0)
    throw ValidationError("kx_taps must be odd and positive, got " + std::to_string(c.kx_taps));
  if (c.n_source_lines_per_side < 1)
    throw ValidationError("n_source_lines_per_side must be >= 1");
  if (c.lambda_rel < 0.0) throw ValidationError("lambda_rel must be >= 0");
}

}  // namespace

std::vector<int> source_offsets_for_line(const SamplingMask& mask, int line,
                                         const GrappaConfig& config) {
  check_config(config);
  const int n = mask.n_lines;
  if (line < 0 || line >= n) throw ValidationError("line index out of range");
  if (mask.lines[line]) return {};

  std::vector<int> ups, downs;
  for (int i = line - 1; i >= 0 && static_cast<int>(ups.size()) < 2 * config.n_source_lines_per_side;
       --i)
    if (mask.lines[i]) ups.push_back(i - line);
  for (int i = line + 1;
       i < n && static_cast<int>(downs.size()) < 2 * config.n_source_lines_per_side; ++i)
    if (mask.lines[i]) downs.push_back(i - line);

  if (ups.empty() && downs.empty())
    throw ValidationError("mask has no acquired line on either side of line " +
                          std::to_string(line));

  const int per_side = config.n_source_lines_per_side;
  std::vector<int> offsets;
  if (ups.empty()) {
    // One-sided: take twice the per-side count from below.
    for (int i = 0; i < std::min<int>(2 * per_side, downs.size()); ++i) offsets.push_back(downs[i]);
  } else if (downs.empty()) {
    for (int i = 0; i < std::min<int>(2 * per_side, ups.size()); ++i) offsets.push_back(ups[i]);
  } else {
    for (int i = 0; i < std::min<int>(per_side, ups.size()); ++i) offsets.push_back(ups[i]);
    for (int i = 0; i < std::min<int>(per_side, downs.size()); ++i) offsets.push_back(downs[i]);
  }
  std::sort(offsets.begin(), offsets.end());
  return offsets;
}

std::vector<KernelGeometry> enumerate_geometries(const SamplingMask& mask,
                                                 const GrappaConfig& config) {
  check_config(config);
  std::set<KernelGeometry> out;
  for (int t = 0; t < mask.n_lines; ++t) {
    if (mask.lines[t]) continue;
    KernelGeometry g;
    g.source_offsets = source_offsets_for_line(mask, t, config);
    g.kx_taps = config.kx_taps;
    out.insert(std::move(g));
  }
  return {out.begin(), out.end()};
}

int min_acs_span(const std::vector<KernelGeometry>& geometries) {
  int span = 0;
  for (const KernelGeometry& g : geometries) {
    int lo = 0, hi = 0;
    for (int o : g.source_offsets) {
      lo = std::min(lo, o);
      hi = std::max(hi, o);
    }
    span = std::max(span, hi - lo + 1);
  }
  return span;
}

GrappaKernelSet calibrate(const KSpaceGrid& kspace, int acs_begin, int acs_end,
                          const std::vector<KernelGeometry>& geometries,
                          const GrappaConfig& config) {
  check_config(config);
  kspace.require_finite("grappa calibrate");
  if (acs_begin < 0 || acs_end > kspace.n_lines() || acs_begin >= acs_end)
    throw ValidationError("ACS range [" + std::to_string(acs_begin) + ", " +
                          std::to_string(acs_end) + ") invalid for " +
                          std::to_string(kspace.n_lines()) + " lines");

  const int nc = kspace.n_coils();
  const int n_read = kspace.n_read();
  const int taps = config.kx_taps;
  const int half = taps / 2;
  if (n_read < taps)
    throw ValidationError("readout extent " + std::to_string(n_read) + " is narrower than kx_taps " +
                          std::to_string(taps));

  GrappaKernelSet set;
  set.config = config;
  set.n_coils = nc;
  set.acs_begin = acs_begin;
  set.acs_end = acs_end;

  for (const KernelGeometry& g : geometries) {
    if (g.kx_taps != taps)
      throw ValidationError(g.describe() + " disagrees with configured kx_taps");
    if (g.source_offsets.empty()) throw ValidationError("geometry with no sources");

    int min_o = 0, max_o = 0;
    for (int o : g.source_offsets) {
      min_o = std::min(min_o, o);
      max_o = std::max(max_o, o);
    }
    const int t_lo = acs_begin - min_o;
    const int t_hi = acs_end - max_o;  // exclusive
    if (t_lo >= t_hi)
      throw ValidationError("ACS spans " + std::to_string(acs_end - acs_begin) +
                            " lines, too small for " + g.describe());

    const int n_off = static_cast<int>(g.source_offsets.size());
    const int n_feat = nc * n_off * taps;

    Eigen::MatrixXcd ata = Eigen::MatrixXcd::Zero(n_feat, n_feat);
    Eigen::MatrixXcd atb = Eigen::MatrixXcd::Zero(n_feat, nc);
    Eigen::VectorXd b2 = Eigen::VectorXd::Zero(nc);
    Eigen::VectorXcd a(n_feat);

    for (int t = t_lo; t < t_hi; ++t)
      for (int x = half; x < n_read - half; ++x) {
        int f = 0;
        for (int sc = 0; sc < nc; ++sc)
          for (int oi = 0; oi < n_off; ++oi)
            for (int ti = 0; ti < taps; ++ti)
              a(f++) = kspace.at_line(sc, t + g.source_offsets[oi], x + ti - half);
        ata.noalias() += a.conjugate() * a.transpose();
        for (int tc = 0; tc < nc; ++tc) {
          const cplx b = kspace.at_line(tc, t, x);
          atb.col(tc).noalias() += a.conjugate() * b;
          b2(tc) += std::norm(b);
        }
      }

    const double mean_diag = ata.real().trace() / n_feat;
    const double lambda = config.lambda_rel * mean_diag;
    Eigen::MatrixXcd reg = ata;
    reg.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXcd> ldlt(reg);
    if (ldlt.info() != Eigen::Success)
      throw ValidationError("calibration solve failed for " + g.describe());
    Eigen::MatrixXcd w = ldlt.solve(atb);

    GrappaKernel kernel;
    kernel.geometry = g;
    kernel.weights.resize(static_cast<size_t>(nc) * n_feat);
    for (int tc = 0; tc < nc; ++tc)
      for (int f = 0; f < n_feat; ++f) {
        const cplx v = w(f, tc);
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
          throw ValidationError("non-finite weights for " + g.describe());
        kernel.weights[static_cast<size_t>(tc) * n_feat + f] = v;
      }
    // Residual by a direct pass; the normal-equation form cancels badly
    // when the fit is near exact.
    double res2 = 0.0, b2_total = b2.sum();
    for (int t = t_lo; t < t_hi; ++t)
      for (int x = half; x < n_read - half; ++x) {
        int f = 0;
        for (int sc = 0; sc < nc; ++sc)
          for (int oi = 0; oi < n_off; ++oi)
            for (int ti = 0; ti < taps; ++ti)
              a(f++) = kspace.at_line(sc, t + g.source_offsets[oi], x + ti - half);
        for (int tc = 0; tc < nc; ++tc)
          res2 += std::norm((a.transpose() * w.col(tc))(0, 0) - kspace.at_line(tc, t, x));
      }
    kernel.residual = b2_total > 0.0 ? std::sqrt(res2 / b2_total) : std::sqrt(res2);
    set.kernels.push_back(std::move(kernel));
  }
  std::sort(set.kernels.begin(), set.kernels.end(),
            [](const GrappaKernel& a, const GrappaKernel& b) { return a.geometry < b.geometry; });
  return set;
}

KSpaceGrid fill(const KSpaceGrid& kspace_masked, const SamplingMask& mask,
                const GrappaKernelSet& kernels) {
  if (mask.n_lines != kspace_masked.n_lines())
    throw ValidationError("mask length does not match k-space line extent");
  if (kernels.n_coils != 0 && kernels.n_coils != kspace_masked.n_coils())
    throw ValidationError("kernel set was calibrated for " + std::to_string(kernels.n_coils) +
                          " coils, input has " + std::to_string(kspace_masked.n_coils()));
  kspace_masked.require_finite("grappa fill");

  KSpaceGrid out = kspace_masked;
  const int nc = kspace_masked.n_coils();
  const int n_read = kspace_masked.n_read();
  const int taps = kernels.config.kx_taps;
  const int half = taps / 2;

  for (int t = 0; t < mask.n_lines; ++t) {
    if (mask.lines[t]) continue;
    KernelGeometry g;
    g.source_offsets = source_offsets_for_line(mask, t, kernels.config);
    g.kx_taps = taps;
    const GrappaKernel* kernel = kernels.find(g);
    if (!kernel)
      throw ValidationError("no calibrated kernel for " + g.describe() + " needed at line " +
                            std::to_string(t));
    const int n_off = static_cast<int>(g.source_offsets.size());
    const int n_feat = nc * n_off * taps;
    for (int tc = 0; tc < nc; ++tc) {
      const cplx* w = kernel->weights.data() + static_cast<size_t>(tc) * n_feat;
      for (int x = 0; x < n_read; ++x) {
        cplx acc(0, 0);
        int f = 0;
        for (int sc = 0; sc < nc; ++sc)
          for (int oi = 0; oi < n_off; ++oi) {
            const int src_line = t + g.source_offsets[oi];
            for (int ti = 0; ti < taps; ++ti, ++f) {
              const int sx = x + ti - half;
              if (sx < 0 || sx >= n_read) continue;  // zero-padded readout edge
              acc += w[f] * kspace_masked.at_line(sc, src_line, sx);
            }
          }
        out.at_line(tc, t, x) = acc;
      }
    }
  }
  return out;
}

}  // namespace rtrecon
