#include "rtrecon/phantom.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rtrecon/errors.hpp"
#include "rtrecon/rng.hpp"

namespace rtrecon {

namespace {

constexpr double kPhaseScale = 2.0 * std::numbers::pi;

// Membership sum over a parameter table at normalized coords x right, y up,
// both in [-1, 1].
double ellipse_sum(const std::vector<EllipseSpec>& table, double x, double y) {
  double v = 0.0;
  for (const EllipseSpec& e : table) {
    const double phi = e.phi_deg * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    const double dx = x - e.x0, dy = y - e.y0;
    const double xr = c * dx + s * dy;
    const double yr = -s * dx + c * dy;
    if ((xr / e.a) * (xr / e.a) + (yr / e.b) * (yr / e.b) <= 1.0) v += e.intensity;
  }
  return v;
}

RealImage render(const std::vector<EllipseSpec>& table, int rows, int cols) {
  if (rows < 8 || cols < 8)
    throw ValidationError("phantom needs rows, cols >= 8, got " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  RealImage im(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double y = 1.0 - (2.0 * i + 1.0) / rows;
    for (int j = 0; j < cols; ++j) {
      const double x = (2.0 * j + 1.0) / cols - 1.0;
      im.at(i, j) = std::max(0.0, ellipse_sum(table, x, y));
    }
  }
  const double m = im.max_value();
  if (m > 0.0)
    for (double& v : im.data()) v /= m;
  return im;
}

}  // namespace

void validate(const CoilLayout& layout) {
  if (layout.coils.empty()) throw ValidationError("coil layout needs at least one coil");
  for (const CoilSpec& c : layout.coils) {
    if (!(c.gain > 0.0)) throw ValidationError("coil gain must be positive");
    if (!(c.radius > 0.0)) throw ValidationError("coil radius must be positive");
    if (c.noise_sigma < 0.0) throw ValidationError("coil noise sigma must be >= 0");
  }
}

CoilLayout default_rt_layout() {
  CoilLayout layout;
  // 4 anterior loop channels: clean. 8 posterior channels: noisier, so the
  // trailing virtual coils pick up visible noise.
  for (int i = 0; i < 4; ++i)
    layout.coils.push_back({0.25, 0.2 + 0.2 * i, 0.45, 1.0, 0.003});
  for (int i = 0; i < 8; ++i)
    layout.coils.push_back({0.78, 0.1 + 0.8 * i / 7.0, 0.40, 0.9, 0.015});
  return layout;
}

CoilLayout ring_layout(int n_coils, double radius, double noise_sigma) {
  if (n_coils < 1) throw ValidationError("ring layout needs at least one coil");
  CoilLayout layout;
  for (int i = 0; i < n_coils; ++i) {
    const double th = 2.0 * std::numbers::pi * i / n_coils;
    layout.coils.push_back(
        {0.5 + 0.35 * std::sin(th), 0.5 + 0.35 * std::cos(th), radius, 1.0, noise_sigma});
  }
  return layout;
}

const std::vector<EllipseSpec>& shepp_logan_ellipses() {
  static const std::vector<EllipseSpec> table = {
      {2.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
      {-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
      {-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
      {-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
      {0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
      {0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
      {0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
      {0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
      {0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
      {0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
  };
  return table;
}

RealImage shepp_logan(int rows, int cols) { return render(shepp_logan_ellipses(), rows, cols); }

RealImage shepp_logan_jittered(int rows, int cols, uint64_t seed, uint64_t slice) {
  // Jitter ranges: centers +-0.02, axes and intensity scaled within a few
  // percent, rotation +-2 degrees. Enough to make slices distinct, small
  // enough to keep every slice a plausible head.
  Rng rng(derive_seed(seed, slice, 2));
  std::vector<EllipseSpec> table = shepp_logan_ellipses();
  for (EllipseSpec& e : table) {
    e.x0 += rng.uniform(-0.02, 0.02);
    e.y0 += rng.uniform(-0.02, 0.02);
    e.a *= rng.uniform(0.97, 1.03);
    e.b *= rng.uniform(0.97, 1.03);
    e.phi_deg += rng.uniform(-2.0, 2.0);
    e.intensity *= rng.uniform(0.98, 1.02);
  }
  return render(table, rows, cols);
}

cplx coil_sensitivity(const CoilSpec& coil, int row, int col, int rows, int cols) {
  const double ur = (row + 0.5) / rows;
  const double uc = (col + 0.5) / cols;
  const double dr = ur - coil.center_row;
  const double dc = uc - coil.center_col;
  const double mag = coil.gain * std::exp(-(dr * dr + dc * dc) / (2.0 * coil.radius * coil.radius));
  // Linear ramp proportional to the coil offset; a centered coil has zero
  // phase everywhere.
  const double phase = kPhaseScale * ((coil.center_row - 0.5) * (ur - 0.5) +
                                      (coil.center_col - 0.5) * (uc - 0.5));
  return cplx(mag * std::cos(phase), mag * std::sin(phase));
}

CoilImageStack simulate_coils(const RealImage& image, const CoilLayout& layout) {
  validate(layout);
  if (!image.all_finite()) throw ValidationError("simulate_coils: non-finite image");
  CoilImageStack stack(layout.n_coils(), image.rows(), image.cols());
  for (int c = 0; c < layout.n_coils(); ++c)
    for (int i = 0; i < image.rows(); ++i)
      for (int j = 0; j < image.cols(); ++j)
        stack.at(c, i, j) =
            image.at(i, j) * coil_sensitivity(layout.coils[c], i, j, image.rows(), image.cols());
  return stack;
}

KSpaceGrid to_kspace_with_noise(const CoilImageStack& stack, const CoilLayout& layout,
                                uint64_t seed) {
  validate(layout);
  if (layout.n_coils() != stack.n_coils())
    throw ValidationError("layout has " + std::to_string(layout.n_coils()) + " coils, stack has " +
                          std::to_string(stack.n_coils()));
  KSpaceGrid k = fft2(stack);
  const size_t plane = static_cast<size_t>(k.rows()) * k.cols();
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int c = 0; c < k.n_coils(); ++c) {
    const double sigma = layout.coils[c].noise_sigma;
    if (sigma == 0.0) continue;
    // Per-coil stream keyed on (seed, coil): coils can be generated in any
    // order or in parallel with identical output.
    Rng rng(derive_seed(seed, static_cast<uint64_t>(c), 1));
    cplx* p = k.data().data() + c * plane;
    for (size_t i = 0; i < plane; ++i) {
      const double re = rng.next_normal(), im = rng.next_normal();
      p[i] += sigma * inv_sqrt2 * cplx(re, im);
    }
  }
  return k;
}

}  // namespace rtrecon
