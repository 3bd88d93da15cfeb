#include "rtrecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rtrecon/errors.hpp"

namespace rtrecon {

namespace {

void check_same_shape(const RealImage& a, const RealImage& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) +
                          "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                          "x" + std::to_string(b.cols()));
  if (!a.all_finite() || !b.all_finite())
    throw ValidationError(std::string(what) + ": non-finite input");
}

}  // namespace

RealImage gaussian_smooth(const RealImage& im, double sigma) {
  if (sigma <= 0.0) throw ValidationError("gaussian_smooth: sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  const int rows = im.rows(), cols = im.cols();
  RealImage tmp(rows, cols), out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d)
        acc += kernel[d + radius] * im.at(r, std::clamp(c + d, 0, cols - 1));
      tmp.at(r, c) = acc;
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int d = -radius; d <= radius; ++d)
        acc += kernel[d + radius] * tmp.at(std::clamp(r + d, 0, rows - 1), c);
      out.at(r, c) = acc;
    }
  return out;
}

int EdgeMap::count() const {
  int n = 0;
  for (uint8_t v : values) n += v != 0;
  return n;
}

std::vector<std::pair<int, int>> EdgeMap::pixels() const {
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (at(r, c)) out.emplace_back(r, c);
  return out;
}

SsimResult ssim(const RealImage& pred, const RealImage& ref, const SsimParams& params) {
  check_same_shape(pred, ref, "ssim");
  const int w = params.window;
  const int rows = pred.rows(), cols = pred.cols();
  if (w < 2) throw ValidationError("ssim window must be at least 2");
  if (w > rows || w > cols)
    throw ValidationError("ssim window " + std::to_string(w) + " exceeds image " +
                          std::to_string(rows) + "x" + std::to_string(cols));
  double range = params.data_range;
  if (range <= 0.0) range = ref.max_value();
  if (range <= 0.0) throw ValidationError("ssim data range must be positive");

  const double c1 = params.k1 * range * params.k1 * range;
  const double c2 = params.k2 * range * params.k2 * range;
  const int out_rows = rows - w + 1, out_cols = cols - w + 1;
  const double n = static_cast<double>(w) * w;
  const double n_windows = static_cast<double>(out_rows) * out_cols;

  SsimResult result;
  result.map = RealImage(out_rows, out_cols);
  result.gradient = RealImage(rows, cols);
  double total = 0.0;

  for (int r0 = 0; r0 < out_rows; ++r0)
    for (int c0 = 0; c0 < out_cols; ++c0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double x = pred.at(r0 + i, c0 + j);
          const double y = ref.at(r0 + i, c0 + j);
          sx += x;
          sy += y;
          sxx += x * x;
          syy += y * y;
          sxy += x * y;
        }
      const double mx = sx / n, my = sy / n;
      const double vx = sxx / n - mx * mx;  // biased moments
      const double vy = syy / n - my * my;
      const double cxy = sxy / n - mx * my;

      const double a1 = 2.0 * mx * my + c1;
      const double a2 = 2.0 * cxy + c2;
      const double b1 = mx * mx + my * my + c1;
      const double b2 = vx + vy + c2;
      const double s = (a1 * a2) / (b1 * b2);
      result.map.at(r0, c0) = s;
      total += s;

      // d(mean)/dx_j accumulated per covered pixel; each window weighs
      // 1/n_windows in the mean.
      const double scale = 2.0 / (n * b1 * b2) / n_windows;
      for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
          const double x = pred.at(r0 + i, c0 + j);
          const double y = ref.at(r0 + i, c0 + j);
          const double d =
              scale * ((my * a2 + a1 * (y - my)) - s * (mx * b2 + (x - mx) * b1));
          result.gradient.at(r0 + i, c0 + j) += d;
        }
    }
  result.mean = total / n_windows;
  return result;
}

double psnr(const RealImage& pred, const RealImage& ref) {
  check_same_shape(pred, ref, "psnr");
  const double peak = ref.max_value();
  if (peak <= 0.0) throw ValidationError("psnr: reference peak must be positive");
  double mse = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - ref.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double nmse(const RealImage& pred, const RealImage& ref) {
  check_same_shape(pred, ref, "nmse");
  double err = 0.0, den = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - ref.data()[i];
    err += d * d;
    den += ref.data()[i] * ref.data()[i];
  }
  if (den <= 0.0) throw ValidationError("nmse: reference is identically zero");
  return err / den;
}

EdgeMap canny_edges(const RealImage& image, double sigma) {
  if (sigma <= 0.0) throw ValidationError("canny sigma must be positive");
  if (!image.all_finite()) throw ValidationError("canny: non-finite input");
  const int rows = image.rows(), cols = image.cols();

  EdgeMap map;
  map.rows = rows;
  map.cols = cols;
  map.sigma = sigma;
  map.values.assign(static_cast<size_t>(rows) * cols, 0);

  RealImage sm = gaussian_smooth(image, sigma);

  // Sobel with replicate borders.
  std::vector<double> gx(sm.size()), gy(sm.size()), mag(sm.size());
  auto v = [&](int r, int c) { return sm.at(std::clamp(r, 0, rows - 1), std::clamp(c, 0, cols - 1)); };
  double max_mag = 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double dx = (v(r - 1, c + 1) + 2 * v(r, c + 1) + v(r + 1, c + 1)) -
                        (v(r - 1, c - 1) + 2 * v(r, c - 1) + v(r + 1, c - 1));
      const double dy = (v(r + 1, c - 1) + 2 * v(r + 1, c) + v(r + 1, c + 1)) -
                        (v(r - 1, c - 1) + 2 * v(r - 1, c) + v(r - 1, c + 1));
      const size_t k = static_cast<size_t>(r) * cols + c;
      gx[k] = dx;
      gy[k] = dy;
      mag[k] = std::hypot(dx, dy);
      max_mag = std::max(max_mag, mag[k]);
    }
  if (max_mag <= 0.0) return map;  // constant image

  // Non-maximum suppression along the quantized gradient direction. The
  // first neighbor (top/left side) is compared strictly so exactly one pixel
  // of a two-pixel plateau survives.
  std::vector<uint8_t> keep(mag.size(), 0);
  auto m = [&](int r, int c) -> double {
    if (r < 0 || r >= rows || c < 0 || c >= cols) return 0.0;
    return mag[static_cast<size_t>(r) * cols + c];
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const size_t k = static_cast<size_t>(r) * cols + c;
      if (mag[k] <= 0.0) continue;
      double angle = std::atan2(gy[k], gx[k]);
      if (angle < 0) angle += M_PI;
      double m1, m2;
      if (angle < M_PI / 8 || angle >= 7 * M_PI / 8) {  // horizontal gradient
        m1 = m(r, c - 1);
        m2 = m(r, c + 1);
      } else if (angle < 3 * M_PI / 8) {  // diagonal /
        m1 = m(r - 1, c + 1);
        m2 = m(r + 1, c - 1);
      } else if (angle < 5 * M_PI / 8) {  // vertical gradient
        m1 = m(r - 1, c);
        m2 = m(r + 1, c);
      } else {  // diagonal backslash
        m1 = m(r - 1, c - 1);
        m2 = m(r + 1, c + 1);
      }
      if (mag[k] > m1 && mag[k] >= m2) keep[k] = 1;
    }

  const double high = 0.2 * max_mag, low = 0.1 * max_mag;
  std::vector<int> stack;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const size_t k = static_cast<size_t>(r) * cols + c;
      if (keep[k] && mag[k] >= high && !map.values[k]) {
        map.values[k] = 1;
        stack.push_back(static_cast<int>(k));
        while (!stack.empty()) {
          const int cur = stack.back();
          stack.pop_back();
          const int cr = cur / cols, cc = cur % cols;
          for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
              if (!dr && !dc) continue;
              const int nr = cr + dr, nc = cc + dc;
              if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
              const size_t nk = static_cast<size_t>(nr) * cols + nc;
              if (!map.values[nk] && keep[nk] && mag[nk] >= low) {
                map.values[nk] = 1;
                stack.push_back(static_cast<int>(nk));
              }
            }
        }
      }
    }
  return map;
}

double dice(const EdgeMap& r, const EdgeMap& y) {
  if (r.rows != y.rows || r.cols != y.cols) throw ValidationError("dice: shape mismatch");
  int nr = 0, ny = 0, both = 0;
  for (size_t i = 0; i < r.values.size(); ++i) {
    nr += r.values[i] != 0;
    ny += y.values[i] != 0;
    both += r.values[i] != 0 && y.values[i] != 0;
  }
  if (nr + ny == 0) return 1.0;  // agreement on absence
  return 2.0 * both / (nr + ny);
}

double hausdorff(const EdgeMap& r, const EdgeMap& y) {
  if (r.rows != y.rows || r.cols != y.cols) throw ValidationError("hausdorff: shape mismatch");
  const auto pr = r.pixels();
  const auto py = y.pixels();
  if (pr.empty() || py.empty())
    throw ValidationError("hausdorff: undefined for an empty edge map");

  // Directed distance with early exit: a point whose running nearest
  // neighbor already beats the current max cannot raise it.
  auto directed2 = [](const std::vector<std::pair<int, int>>& a,
                      const std::vector<std::pair<int, int>>& b) {
    double cmax2 = 0.0;
    for (const auto& p : a) {
      double cmin2 = std::numeric_limits<double>::infinity();
      for (const auto& q : b) {
        const double dr = p.first - q.first, dc = p.second - q.second;
        const double d2 = dr * dr + dc * dc;
        if (d2 < cmin2) {
          cmin2 = d2;
          if (cmin2 <= cmax2) break;
        }
      }
      if (cmin2 > cmax2) cmax2 = cmin2;
    }
    return cmax2;
  };
  return std::sqrt(std::max(directed2(pr, py), directed2(py, pr)));
}

SliceMetrics evaluate(const RealImage& pred, const RealImage& ref, double canny_sigma) {
  SliceMetrics out;
  out.ssim = ssim(pred, ref).mean;
  out.psnr = psnr(pred, ref);
  out.nmse = nmse(pred, ref);
  EdgeMap er = canny_edges(ref, canny_sigma);
  EdgeMap ep = canny_edges(pred, canny_sigma);
  out.dice_hfc = dice(er, ep);
  if (er.count() > 0 && ep.count() > 0) out.hausdorff_hfc = hausdorff(er, ep);
  return out;
}

namespace {

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  s.n = static_cast<int>(xs.size());
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / s.n;
  if (s.n >= 2) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / (s.n - 1));
  }
  return s;
}

}  // namespace

MetricsSummary aggregate(const std::vector<SliceMetrics>& slices) {
  std::vector<double> ssims, psnrs, nmses, dices, hds;
  for (const SliceMetrics& s : slices) {
    ssims.push_back(s.ssim);
    psnrs.push_back(s.psnr);
    nmses.push_back(s.nmse);
    dices.push_back(s.dice_hfc);
    if (s.hausdorff_hfc) hds.push_back(*s.hausdorff_hfc);
  }
  MetricsSummary out;
  out.ssim = stat_of(ssims);
  out.psnr = stat_of(psnrs);
  out.nmse = stat_of(nmses);
  out.dice_hfc = stat_of(dices);
  out.hausdorff_hfc = stat_of(hds);
  return out;
}

}  // namespace rtrecon
