#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "rtrecon/grappa.hpp"
#include "rtrecon/phantom.hpp"
#include "rtrecon/rng.hpp"

using namespace rtrecon;

namespace {

KSpaceGrid random_kspace(int n_coils, int rows, int cols, uint64_t seed) {
  KSpaceGrid k(n_coils, rows, cols);
  Rng rng(seed);
  for (cplx& z : k.data()) z = cplx(rng.next_normal(), rng.next_normal());
  return k;
}

SamplingMask literal_mask(const std::vector<int>& acquired, int n) {
  SamplingMask m;
  m.n_lines = n;
  m.lines.assign(n, 0);
  for (int i : acquired) m.lines[i] = 1;
  return m;
}

std::pair<int, int> gaps(const KernelGeometry& g) { return {g.gap_up(), g.gap_down()}; }

// Dense complex linear solve, partial pivoting; oracle-side only.
void gauss_jordan(std::vector<cplx>& a, std::vector<cplx>& rhs, int n, int n_rhs) {
  auto A = [&](int i, int j) -> cplx& { return a[static_cast<size_t>(i) * n + j]; };
  auto B = [&](int i, int j) -> cplx& { return rhs[static_cast<size_t>(i) * n_rhs + j]; };
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A(r, col)) > std::abs(A(piv, col))) piv = r;
    REQUIRE(std::abs(A(piv, col)) > 0.0);
    if (piv != col)
      for (int j = 0; j < n; ++j) {
        std::swap(A(piv, j), A(col, j));
        if (j < n_rhs) std::swap(B(piv, j), B(col, j));
      }
    if (n_rhs > n)
      for (int j = n; j < n_rhs; ++j) std::swap(B(piv, j), B(col, j));
    const cplx d = A(col, col);
    for (int j = 0; j < n; ++j) A(col, j) /= d;
    for (int j = 0; j < n_rhs; ++j) B(col, j) /= d;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const cplx f = A(r, col);
      if (f == cplx(0, 0)) continue;
      for (int j = 0; j < n; ++j) A(r, j) -= f * A(col, j);
      for (int j = 0; j < n_rhs; ++j) B(r, j) -= f * B(col, j);
    }
  }
}

// Brute-force single-geometry R=2 GRAPPA: dense A/b assembly over the same
// window set, explicit normal equations, Gauss-Jordan solve, naive fill.
KSpaceGrid oracle_r2_fill(const KSpaceGrid& masked, const SamplingMask& mask, int acs_begin,
                          int acs_end, int taps, double lambda_rel) {
  const int nc = masked.n_coils();
  const int n_read = masked.n_read();
  const int half = taps / 2;
  const int n_feat = nc * 2 * taps;

  std::vector<std::vector<cplx>> rows;  // A
  std::vector<std::vector<cplx>> targets(nc);
  for (int t = acs_begin + 1; t < acs_end - 1; ++t)
    for (int x = half; x < n_read - half; ++x) {
      std::vector<cplx> row;
      row.reserve(n_feat);
      for (int sc = 0; sc < nc; ++sc)
        for (int o : {-1, +1})
          for (int dx = -half; dx <= half; ++dx) row.push_back(masked.at_line(sc, t + o, x + dx));
      rows.push_back(std::move(row));
      for (int tc = 0; tc < nc; ++tc) targets[tc].push_back(masked.at_line(tc, t, x));
    }
  REQUIRE(!rows.empty());

  std::vector<cplx> ata(static_cast<size_t>(n_feat) * n_feat, cplx(0, 0));
  std::vector<cplx> atb(static_cast<size_t>(n_feat) * nc, cplx(0, 0));
  for (size_t w = 0; w < rows.size(); ++w)
    for (int i = 0; i < n_feat; ++i) {
      const cplx ci = std::conj(rows[w][i]);
      for (int j = 0; j < n_feat; ++j) ata[static_cast<size_t>(i) * n_feat + j] += ci * rows[w][j];
      for (int tc = 0; tc < nc; ++tc) atb[static_cast<size_t>(i) * nc + tc] += ci * targets[tc][w];
    }
  double mean_diag = 0.0;
  for (int i = 0; i < n_feat; ++i) mean_diag += ata[static_cast<size_t>(i) * n_feat + i].real();
  mean_diag /= n_feat;
  for (int i = 0; i < n_feat; ++i)
    ata[static_cast<size_t>(i) * n_feat + i] += lambda_rel * mean_diag;
  gauss_jordan(ata, atb, n_feat, nc);  // atb now holds the weights

  KSpaceGrid out = masked;
  for (int t = 0; t < mask.n_lines; ++t) {
    if (mask.lines[t]) continue;
    for (int tc = 0; tc < nc; ++tc)
      for (int x = 0; x < n_read; ++x) {
        cplx acc(0, 0);
        int f = 0;
        for (int sc = 0; sc < nc; ++sc)
          for (int o : {-1, +1})
            for (int dx = -half; dx <= half; ++dx, ++f) {
              const int sx = x + dx;
              if (sx < 0 || sx >= n_read) continue;
              acc += atb[static_cast<size_t>(f) * nc + tc] * masked.at_line(sc, t + o, sx);
            }
        out.at_line(tc, t, x) = acc;
      }
  }
  return out;
}

// Image with exactly two nonzero pixels: every k-space line is then an exact
// fixed linear combination of any two other lines, with coefficients shared
// across coils and readout positions, so single-tap GRAPPA kernels can be
// exact for every geometry.
CoilImageStack two_pixel_stack(int rows, int cols) {
  RealImage im(rows, cols);
  im.at(5, 20) = 0.9;
  im.at(11, 27) = 0.6;
  return simulate_coils(im, ring_layout(3, 0.6, 0.0));
}

}  // namespace

TEST_CASE("geometry accessors and ordering") {
  KernelGeometry g{{-1, 2}, 5};
  CHECK(g.gap_up() == 1);
  CHECK(g.gap_down() == 2);
  KernelGeometry one_sided{{3, 8}, 5};
  CHECK(one_sided.gap_up() == 0);
  CHECK(one_sided.gap_down() == 3);
  CHECK(KernelGeometry{{-1, 1}, 5} < KernelGeometry{{-1, 2}, 5});
  CHECK(g.describe().find("gap_up=1") != std::string::npos);
}

TEST_CASE("uniform R=2 mask yields the single (1,1) geometry") {
  std::vector<int> acquired;
  for (int i = 0; i < 24; i += 2) acquired.push_back(i);
  acquired.push_back(23);
  SamplingMask m = literal_mask(acquired, 24);
  auto gs = enumerate_geometries(m, {});
  REQUIRE(gs.size() == 1);
  CHECK(gaps(gs[0]) == std::pair{1, 1});
  CHECK(gs[0].source_offsets == std::vector<int>{-1, 1});
}

TEST_CASE("hand-built 12-line mask gives geometries (1,1),(1,2),(2,1)") {
  SamplingMask m = literal_mask({0, 2, 5, 8, 10, 11}, 12);
  auto gs = enumerate_geometries(m, {});
  REQUIRE(gs.size() == 3);
  std::set<std::pair<int, int>> got;
  for (const auto& g : gs) got.insert(gaps(g));
  CHECK(got == std::set<std::pair<int, int>>{{1, 1}, {1, 2}, {2, 1}});
}

TEST_CASE("fully sampled mask has no geometries") {
  SamplingMask m;
  m.n_lines = 10;
  m.lines.assign(10, 1);
  CHECK(enumerate_geometries(m, {}).empty());
}

TEST_CASE("leading missing lines get one-sided two-source geometries") {
  SamplingMask m = literal_mask({4, 6, 8, 9, 10, 11}, 12);
  auto off0 = source_offsets_for_line(m, 0, {});
  CHECK(off0 == std::vector<int>{4, 6});
  auto off5 = source_offsets_for_line(m, 5, {});
  CHECK(off5 == std::vector<int>{-1, 1});
  CHECK(source_offsets_for_line(m, 4, {}).empty());  // acquired line
  auto gs = enumerate_geometries(m, {});
  for (const auto& g : gs) CHECK(!g.source_offsets.empty());
}

TEST_CASE("min_acs_span covers the widest geometry") {
  CHECK(min_acs_span({}) == 0);
  CHECK(min_acs_span({KernelGeometry{{-1, 1}, 5}}) == 3);
  CHECK(min_acs_span({KernelGeometry{{-1, 1}, 5}, KernelGeometry{{10, 15}, 5}}) == 16);
}

TEST_CASE("rank-limited data calibrates exactly and fills exactly") {
  const int rows = 16, cols = 48;
  CoilImageStack stack = two_pixel_stack(rows, cols);
  KSpaceGrid full = fft2(stack);

  // Brute-force check that one fixed linear relation predicts every line
  // from its neighbors, jointly over all coils and readout positions.
  {
    cplx n00(0, 0), n01(0, 0), n11(0, 0), r0(0, 0), r1(0, 0);
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < rows; ++x)
        for (int t = 1; t < cols - 1; ++t) {
          const cplx s0 = full.at_line(c, t - 1, x), s1 = full.at_line(c, t + 1, x);
          const cplx y = full.at_line(c, t, x);
          n00 += std::conj(s0) * s0;
          n01 += std::conj(s0) * s1;
          n11 += std::conj(s1) * s1;
          r0 += std::conj(s0) * y;
          r1 += std::conj(s1) * y;
        }
    const cplx det = n00 * n11 - n01 * std::conj(n01);
    REQUIRE(std::abs(det) > 0.0);
    const cplx alpha = (r0 * n11 - n01 * r1) / det;
    const cplx beta = (n00 * r1 - std::conj(n01) * r0) / det;
    double worst = 0.0, scale = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < rows; ++x)
        for (int t = 1; t < cols - 1; ++t) {
          const cplx pred =
              alpha * full.at_line(c, t - 1, x) + beta * full.at_line(c, t + 1, x);
          worst = std::max(worst, std::abs(pred - full.at_line(c, t, x)));
          scale = std::max(scale, std::abs(full.at_line(c, t, x)));
        }
    CHECK(worst < 1e-10 * scale);
  }

  SamplingMask mask = make_mask(cols, 7);
  KSpaceGrid masked = apply_mask(full, mask);
  // Line-to-line relation: a single readout tap suffices and keeps the
  // calibration free of edge-padding ambiguity.
  GrappaConfig cfg;
  cfg.kx_taps = 1;
  cfg.lambda_rel = 1e-12;
  auto gs = enumerate_geometries(mask, cfg);
  REQUIRE(!gs.empty());
  GrappaKernelSet kernels = calibrate(full, 0, cols, gs, cfg);
  for (const GrappaKernel& k : kernels.kernels) CHECK(k.residual < 1e-8);

  KSpaceGrid filled = fill(masked, mask, kernels);
  double err2 = 0.0, ref2 = 0.0;
  for (size_t i = 0; i < full.size(); ++i) {
    err2 += std::norm(filled.data()[i] - full.data()[i]);
    ref2 += std::norm(full.data()[i]);
  }
  CHECK(std::sqrt(err2 / ref2) < 1e-6);
}

TEST_CASE("huge ridge collapses all weights to zero") {
  KSpaceGrid k = random_kspace(2, 16, 16, 3);
  GrappaConfig cfg;
  cfg.lambda_rel = 1e12;
  GrappaKernelSet set = calibrate(k, 0, 16, {KernelGeometry{{-1, 1}, 5}}, cfg);
  double worst = 0.0;
  for (const cplx& w : set.kernels[0].weights) worst = std::max(worst, std::abs(w));
  CHECK(worst < 1e-6);
}

TEST_CASE("too-small ACS raises a sizing error naming the geometry") {
  KSpaceGrid k = random_kspace(2, 16, 16, 5);
  try {
    calibrate(k, 7, 9, {KernelGeometry{{-2, 2}, 5}}, {});
    FAIL("expected sizing error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("gap_up=2") != std::string::npos);
  }
  // Readout narrower than the taps is also rejected.
  KSpaceGrid narrow(1, 8, 16);
  GrappaConfig wide;
  wide.kx_taps = 9;
  CHECK_THROWS_AS(calibrate(narrow, 0, 16, {KernelGeometry{{-1, 1}, 9}}, wide),
                  ValidationError);
}

TEST_CASE("fill on a fully sampled grid is the identity") {
  KSpaceGrid k = random_kspace(3, 12, 10, 8);
  SamplingMask all;
  all.n_lines = 10;
  all.lines.assign(10, 1);
  GrappaKernelSet empty;
  KSpaceGrid out = fill(k, all, empty);
  CHECK(out.data() == k.data());
}

TEST_CASE("fill preserves acquired samples bit-for-bit") {
  KSpaceGrid full = random_kspace(3, 16, 48, 11);
  SamplingMask mask = make_mask(48, 21);
  KSpaceGrid masked = apply_mask(full, mask);
  GrappaKernelSet kernels = calibrate(full, 0, 48, enumerate_geometries(mask, {}), {});
  KSpaceGrid filled = fill(masked, mask, kernels);
  const size_t plane = 16 * 48;
  for (int c = 0; c < 3; ++c)
    for (int line = 0; line < 48; ++line) {
      if (!mask.lines[line]) continue;
      for (int read = 0; read < 16; ++read) {
        const cplx a = filled.at_line(c, line, read), b = masked.at_line(c, line, read);
        CHECK(a.real() == b.real());
        CHECK(a.imag() == b.imag());
      }
    }
  (void)plane;
}

TEST_CASE("missing kernel for a geometry is reported by name") {
  KSpaceGrid full = random_kspace(2, 16, 24, 2);
  SamplingMask mask = literal_mask({0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 23}, 24);
  KSpaceGrid masked = apply_mask(full, mask);
  GrappaKernelSet none;
  none.config = GrappaConfig{};
  none.n_coils = 2;
  CHECK_THROWS_AS(fill(masked, mask, none), ValidationError);
}

TEST_CASE("calibration is equivariant under global complex scaling") {
  KSpaceGrid k = random_kspace(3, 16, 20, 14);
  auto gs = std::vector<KernelGeometry>{KernelGeometry{{-1, 1}, 5}, KernelGeometry{{-1, 2}, 5}};
  GrappaKernelSet base = calibrate(k, 4, 16, gs, {});
  KSpaceGrid scaled = k;
  const cplx c(0.3, -1.7);
  for (cplx& z : scaled.data()) z *= c;
  GrappaKernelSet after = calibrate(scaled, 4, 16, gs, {});
  for (size_t i = 0; i < base.kernels.size(); ++i) {
    REQUIRE(base.kernels[i].weights.size() == after.kernels[i].weights.size());
    for (size_t j = 0; j < base.kernels[i].weights.size(); ++j)
      CHECK(std::abs(base.kernels[i].weights[j] - after.kernels[i].weights[j]) < 1e-8);
  }
}

TEST_CASE("uniform R=2 fill matches the brute-force oracle") {
  const int taps = 5;
  const double lambda_rel = 1e-4;
  for (uint64_t seed : {100, 101}) {
    KSpaceGrid full = random_kspace(4, 32, 24, seed);
    std::vector<int> acquired = {9, 11, 13, 23};
    for (int i = 0; i < 24; i += 2) acquired.push_back(i);
    SamplingMask mask = literal_mask(acquired, 24);
    auto gs = enumerate_geometries(mask, {});
    REQUIRE(gs.size() == 1);
    CHECK(gs[0].source_offsets == std::vector<int>{-1, 1});

    KSpaceGrid masked = apply_mask(full, mask);
    GrappaKernelSet kernels = calibrate(masked, 9, 15, gs, {});
    KSpaceGrid filled = fill(masked, mask, kernels);
    KSpaceGrid oracle = oracle_r2_fill(masked, mask, 9, 15, taps, lambda_rel);
    double worst = 0.0;
    for (size_t i = 0; i < filled.size(); ++i)
      worst = std::max(worst, std::abs(filled.data()[i] - oracle.data()[i]));
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("noiseless 3-coil phantom fill reaches NMSE below 5e-2") {
  RealImage im = shepp_logan(48, 192);
  CoilLayout layout = ring_layout(3, 0.6, 0.0);
  CoilImageStack stack = simulate_coils(im, layout);
  KSpaceGrid full = to_kspace_with_noise(stack, layout, 7);  // sigma 0: clean

  SamplingMask mask = make_mask(192, 7);
  KSpaceGrid masked = apply_mask(full, mask);
  auto gs = enumerate_geometries(mask, {});
  GrappaKernelSet kernels = calibrate(full, 0, 192, gs, {});
  KSpaceGrid filled = fill(masked, mask, kernels);

  double err2 = 0.0, ref2 = 0.0;
  for (size_t i = 0; i < full.size(); ++i) {
    err2 += std::norm(filled.data()[i] - full.data()[i]);
    ref2 += std::norm(full.data()[i]);
  }
  const double nmse = err2 / ref2;
  CHECK(nmse < 5e-2);
  // Sanity floor: filling should beat leaving the lines at zero.
  double zf2 = 0.0;
  for (size_t i = 0; i < full.size(); ++i) zf2 += std::norm(masked.data()[i] - full.data()[i]);
  CHECK(err2 < zf2);
}
