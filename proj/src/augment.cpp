#include "rtrecon/augment.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "rtrecon/errors.hpp"
#include "rtrecon/metrics.hpp"
#include "rtrecon/rng.hpp"

namespace rtrecon {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

RealImage channel_image(const Tensor& t, int c) {
  RealImage im(t.dim(1), t.dim(2));
  for (int r = 0; r < im.rows(); ++r)
    for (int k = 0; k < im.cols(); ++k) im.at(r, k) = t.at(c, r, k);
  return im;
}

void set_channel(Tensor& t, int c, const RealImage& im) {
  for (int r = 0; r < im.rows(); ++r)
    for (int k = 0; k < im.cols(); ++k) t.at(c, r, k) = im.at(r, k);
}

double bilinear(const RealImage& im, double sr, double sc) {
  const int r0 = static_cast<int>(std::floor(sr));
  const int c0 = static_cast<int>(std::floor(sc));
  const double fr = sr - r0, fc = sc - c0;
  double acc = 0.0;
  for (int dr = 0; dr < 2; ++dr) {
    const int rr = r0 + dr;
    if (rr < 0 || rr >= im.rows()) continue;
    const double wr = dr ? fr : 1.0 - fr;
    for (int dc = 0; dc < 2; ++dc) {
      const int cc = c0 + dc;
      if (cc < 0 || cc >= im.cols()) continue;
      acc += wr * (dc ? fc : 1.0 - fc) * im.at(rr, cc);
    }
  }
  return acc;
}

RealImage warp_image(const RealImage& im, const RealImage& src_r, const RealImage& src_c) {
  RealImage out(im.rows(), im.cols());
  for (int r = 0; r < im.rows(); ++r)
    for (int c = 0; c < im.cols(); ++c) out.at(r, c) = bilinear(im, src_r.at(r, c), src_c.at(r, c));
  return out;
}

// Same backward warp for every channel and the reference.
TrainingPair warp_pair(const TrainingPair& pair, const RealImage& src_r, const RealImage& src_c) {
  TrainingPair out = pair;
  for (int ch = 0; ch < pair.input.dim(0); ++ch)
    set_channel(out.input, ch, warp_image(channel_image(pair.input, ch), src_r, src_c));
  out.reference = warp_image(pair.reference, src_r, src_c);
  return out;
}

// Inverse affine about the image center: output pixel -> source position.
void affine_fields(int rows, int cols, double angle_deg, double zoom, double shift_frac,
                   RealImage& src_r, RealImage& src_c) {
  const double th = angle_deg * kPi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const double cr = (rows - 1) / 2.0, cc = (cols - 1) / 2.0;
  const double tr = shift_frac * rows, tc = shift_frac * cols;
  src_r = RealImage(rows, cols);
  src_c = RealImage(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double y = r - cr - tr, x = c - cc - tc;
      src_c.at(r, c) = (ct * x + st * y) / zoom + cc;
      src_r.at(r, c) = (-st * x + ct * y) / zoom + cr;
    }
}

// Displacement field: per-axis white noise smoothed at sigma, normalized to
// unit RMS, scaled by alpha (so alpha is the RMS displacement in pixels).
void elastic_fields(int rows, int cols, double alpha, double sigma, uint64_t seed,
                    RealImage& src_r, RealImage& src_c) {
  src_r = RealImage(rows, cols);
  src_c = RealImage(rows, cols);
  if (alpha == 0.0) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        src_r.at(r, c) = r;
        src_c.at(r, c) = c;
      }
    return;
  }
  Rng rng(seed);
  RealImage dr(rows, cols), dc(rows, cols);
  for (double& v : dr.data()) v = rng.next_normal();
  for (double& v : dc.data()) v = rng.next_normal();
  dr = gaussian_smooth(dr, sigma);
  dc = gaussian_smooth(dc, sigma);
  for (RealImage* f : {&dr, &dc}) {
    double sq = 0.0;
    for (double v : f->data()) sq += v * v;
    const double rms = std::sqrt(sq / static_cast<double>(f->size()));
    const double gain = rms > 0.0 ? alpha / rms : 0.0;
    for (double& v : f->data()) v *= gain;
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      src_r.at(r, c) = r + dr.at(r, c);
      src_c.at(r, c) = c + dc.at(r, c);
    }
}

// Coarse 4x4-cell control grid, node displacements ~ N(0, scale * extent),
// interpolated linearly over the two triangles of each cell.
void piecewise_fields(int rows, int cols, double scale, uint64_t seed, RealImage& src_r,
                      RealImage& src_c) {
  constexpr int kCells = 4;
  constexpr int kNodes = kCells + 1;
  double node_r[kNodes][kNodes], node_c[kNodes][kNodes];
  Rng rng(seed);
  for (int i = 0; i < kNodes; ++i)
    for (int j = 0; j < kNodes; ++j) {
      node_r[i][j] = rng.next_normal() * scale * rows;
      node_c[i][j] = rng.next_normal() * scale * cols;
    }
  src_r = RealImage(rows, cols);
  src_c = RealImage(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double gu = static_cast<double>(r) * kCells / (rows - 1);
      const double gv = static_cast<double>(c) * kCells / (cols - 1);
      const int i = std::min(static_cast<int>(gu), kCells - 1);
      const int j = std::min(static_cast<int>(gv), kCells - 1);
      const double u = gu - i, v = gv - j;
      double dr, dc;
      if (u + v <= 1.0) {
        dr = node_r[i][j] + u * (node_r[i + 1][j] - node_r[i][j]) +
             v * (node_r[i][j + 1] - node_r[i][j]);
        dc = node_c[i][j] + u * (node_c[i + 1][j] - node_c[i][j]) +
             v * (node_c[i][j + 1] - node_c[i][j]);
      } else {
        dr = node_r[i + 1][j + 1] + (1.0 - u) * (node_r[i][j + 1] - node_r[i + 1][j + 1]) +
             (1.0 - v) * (node_r[i + 1][j] - node_r[i + 1][j + 1]);
        dc = node_c[i + 1][j + 1] + (1.0 - u) * (node_c[i][j + 1] - node_c[i + 1][j + 1]) +
             (1.0 - v) * (node_c[i + 1][j] - node_c[i + 1][j + 1]);
      }
      src_r.at(r, c) = r + dr;
      src_c.at(r, c) = c + dc;
    }
}

}  // namespace

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::kIdentity: return "identity";
    case TransformKind::kHFlip: return "hflip";
    case TransformKind::kDropout: return "dropout";
    case TransformKind::kGaussianNoise: return "gaussian_noise";
    case TransformKind::kGaussianBlur: return "gaussian_blur";
    case TransformKind::kPiecewiseAffine: return "piecewise_affine";
    case TransformKind::kElastic: return "elastic";
    case TransformKind::kAffine: return "affine";
    case TransformKind::kRotation: return "rotation";
  }
  throw ValidationError("unknown transform kind");
}

TransformKind transform_kind_from_string(const std::string& name) {
  for (TransformKind k :
       {TransformKind::kIdentity, TransformKind::kHFlip, TransformKind::kDropout,
        TransformKind::kGaussianNoise, TransformKind::kGaussianBlur,
        TransformKind::kPiecewiseAffine, TransformKind::kElastic, TransformKind::kAffine,
        TransformKind::kRotation})
    if (to_string(k) == name) return k;
  throw ValidationError("unknown transform kind '" + name + "'");
}

void validate_spec(const TransformSpec& spec) {
  const std::string kind = to_string(spec.kind);
  switch (spec.kind) {
    case TransformKind::kIdentity:
    case TransformKind::kHFlip:
      break;
    case TransformKind::kDropout:
      require(spec.rate >= 0.01 && spec.rate <= 0.05, kind + ": rate outside [0.01, 0.05]");
      break;
    case TransformKind::kGaussianNoise:
      require(spec.scale >= 0.0 && spec.scale <= 12.75, kind + ": scale outside [0, 12.75]");
      break;
    case TransformKind::kGaussianBlur:
      require(spec.sigma >= 0.8 && spec.sigma <= 1.5, kind + ": sigma outside [0.8, 1.5]");
      break;
    case TransformKind::kPiecewiseAffine:
      require(spec.scale >= 0.01 && spec.scale <= 0.07, kind + ": scale outside [0.01, 0.07]");
      break;
    case TransformKind::kElastic:
      require(spec.alpha == 0.0 || (spec.alpha >= 2.5 && spec.alpha <= 50.0),
              kind + ": alpha outside [2.5, 50]");
      require(spec.sigma >= 1.0 && spec.sigma <= 11.0, kind + ": sigma outside [1, 11]");
      break;
    case TransformKind::kAffine:
      require(std::abs(spec.angle_deg) <= 20.0, kind + ": angle outside [-20, 20] degrees");
      require(spec.zoom >= 0.7 && spec.zoom <= 1.5, kind + ": zoom outside [0.7, 1.5]");
      require(std::abs(spec.shift_frac) <= 0.0001, kind + ": shift outside [-0.0001, 0.0001]");
      break;
    case TransformKind::kRotation:
      require(std::abs(spec.angle_deg) <= 30.0, kind + ": angle outside [-30, 30] degrees");
      break;
  }
}

void validate_pair(const TrainingPair& pair) {
  require(pair.input.ndim() == 3, "training pair input must be [channels][rows][cols]");
  require(pair.input.dim(0) >= 1, "training pair needs at least one input channel");
  require(pair.input.dim(1) == pair.reference.rows() && pair.input.dim(2) == pair.reference.cols(),
          "training pair input/reference shape mismatch");
  require(pair.input.all_finite() && pair.reference.all_finite(),
          "training pair holds non-finite values");
}

std::vector<TransformSpec> build_plan(uint64_t seed, const AugmentRecipe& recipe) {
  for (int n : {recipe.hflip, recipe.dropout, recipe.gaussian_noise, recipe.gaussian_blur,
                recipe.piecewise_affine, recipe.elastic, recipe.affine, recipe.rotation})
    require(n >= 0, "recipe counts must be nonnegative");

  Rng rng(derive_seed(seed, 0, 6));
  std::vector<TransformSpec> plan;
  auto push = [&](TransformKind kind, auto fill) {
    TransformSpec spec;
    spec.kind = kind;
    fill(spec);
    spec.seed = derive_seed(seed, plan.size() + 1, 7);
    validate_spec(spec);
    plan.push_back(spec);
  };

  if (recipe.include_identity) push(TransformKind::kIdentity, [](TransformSpec&) {});
  for (int i = 0; i < recipe.hflip; ++i) push(TransformKind::kHFlip, [](TransformSpec&) {});
  for (int i = 0; i < recipe.dropout; ++i)
    push(TransformKind::kDropout, [&](TransformSpec& s) { s.rate = rng.uniform(0.01, 0.05); });
  for (int i = 0; i < recipe.gaussian_noise; ++i)
    push(TransformKind::kGaussianNoise,
         [&](TransformSpec& s) { s.scale = rng.uniform(0.0, 12.75); });
  for (int i = 0; i < recipe.gaussian_blur; ++i)
    push(TransformKind::kGaussianBlur, [&](TransformSpec& s) { s.sigma = rng.uniform(0.8, 1.5); });
  for (int i = 0; i < recipe.piecewise_affine; ++i)
    push(TransformKind::kPiecewiseAffine,
         [&](TransformSpec& s) { s.scale = rng.uniform(0.01, 0.07); });
  for (int i = 0; i < recipe.elastic; ++i)
    push(TransformKind::kElastic, [&](TransformSpec& s) {
      s.alpha = rng.uniform(2.5, 50.0);
      s.sigma = rng.uniform(1.0, 11.0);
    });
  for (int i = 0; i < recipe.affine; ++i)
    push(TransformKind::kAffine, [&](TransformSpec& s) {
      s.angle_deg = rng.uniform(-20.0, 20.0);
      s.zoom = rng.uniform(0.7, 1.5);
      s.shift_frac = rng.uniform(-0.0001, 0.0001);
    });
  for (int i = 0; i < recipe.rotation; ++i)
    push(TransformKind::kRotation,
         [&](TransformSpec& s) { s.angle_deg = rng.uniform(-30.0, 30.0); });
  return plan;
}

TrainingPair apply_transform(const TrainingPair& pair, const TransformSpec& spec) {
  validate_pair(pair);
  validate_spec(spec);
  const int rows = pair.reference.rows(), cols = pair.reference.cols();

  switch (spec.kind) {
    case TransformKind::kIdentity:
      return pair;

    case TransformKind::kHFlip: {
      TrainingPair out = pair;
      for (int ch = 0; ch < pair.input.dim(0); ++ch)
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c) out.input.at(ch, r, c) = pair.input.at(ch, r, cols - 1 - c);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.reference.at(r, c) = pair.reference.at(r, cols - 1 - c);
      return out;
    }

    case TransformKind::kDropout: {
      TrainingPair out = pair;
      Rng rng(spec.seed);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          if (rng.next_double() < spec.rate)
            for (int ch = 0; ch < pair.input.dim(0); ++ch) out.input.at(ch, r, c) = 0.0;
      return out;
    }

    case TransformKind::kGaussianNoise: {
      TrainingPair out = pair;
      Rng rng(spec.seed);
      const double std_unit = spec.scale / 255.0;  // table scale is 8-bit
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          const double n = std_unit * rng.next_normal();
          for (int ch = 0; ch < pair.input.dim(0); ++ch) out.input.at(ch, r, c) += n;
        }
      return out;
    }

    case TransformKind::kGaussianBlur: {
      TrainingPair out = pair;
      for (int ch = 0; ch < pair.input.dim(0); ++ch)
        set_channel(out.input, ch, gaussian_smooth(channel_image(pair.input, ch), spec.sigma));
      return out;
    }

    case TransformKind::kPiecewiseAffine: {
      RealImage src_r, src_c;
      piecewise_fields(rows, cols, spec.scale, spec.seed, src_r, src_c);
      return warp_pair(pair, src_r, src_c);
    }

    case TransformKind::kElastic: {
      RealImage src_r, src_c;
      elastic_fields(rows, cols, spec.alpha, spec.sigma, spec.seed, src_r, src_c);
      return warp_pair(pair, src_r, src_c);
    }

    case TransformKind::kAffine: {
      RealImage src_r, src_c;
      affine_fields(rows, cols, spec.angle_deg, spec.zoom, spec.shift_frac, src_r, src_c);
      return warp_pair(pair, src_r, src_c);
    }

    case TransformKind::kRotation: {
      RealImage src_r, src_c;
      affine_fields(rows, cols, spec.angle_deg, 1.0, 0.0, src_r, src_c);
      return warp_pair(pair, src_r, src_c);
    }
  }
  throw ValidationError("unknown transform kind");
}

}  // namespace rtrecon
