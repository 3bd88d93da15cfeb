#include "rtrecon/enhancer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "rtrecon/errors.hpp"

namespace rtrecon {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const int B = a.dim(0), H = a.dim(2), W = a.dim(3);
  Tensor out({B, a.dim(1) + b.dim(1), H, W});
  for (int n = 0; n < B; ++n) {
    for (int c = 0; c < a.dim(1); ++c)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) out.at(n, c, r, k) = a.at(n, c, r, k);
    for (int c = 0; c < b.dim(1); ++c)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) out.at(n, a.dim(1) + c, r, k) = b.at(n, c, r, k);
  }
  return out;
}

void split_channels(const Tensor& g, int first, Tensor& ga, Tensor& gb) {
  const int B = g.dim(0), H = g.dim(2), W = g.dim(3);
  ga = Tensor({B, first, H, W});
  gb = Tensor({B, g.dim(1) - first, H, W});
  for (int n = 0; n < B; ++n) {
    for (int c = 0; c < first; ++c)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) ga.at(n, c, r, k) = g.at(n, c, r, k);
    for (int c = first; c < g.dim(1); ++c)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) gb.at(n, c - first, r, k) = g.at(n, c, r, k);
  }
}

RealImage slice_to_image(const Tensor& t, int n) {
  RealImage im(t.dim(2), t.dim(3));
  for (int r = 0; r < im.rows(); ++r)
    for (int c = 0; c < im.cols(); ++c) im.at(r, c) = t.at(n, 0, r, c);
  return im;
}

}  // namespace

void validate(const NetworkConfig& config) {
  require(config.depth >= 1, "network depth must be at least 1");
  require(config.base_filters >= 1, "base_filters must be at least 1");
  require(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0,
          "dropout_rate must lie in [0, 1)");
  require(config.input_channels >= 1, "input_channels must be at least 1");
}

void validate(const TrainConfig& config) {
  require(config.batch_size >= 2, "batch_size must be at least 2 for batch norm");
  require(config.initial_lr > 0.0, "initial_lr must be positive");
  require(config.plateau_factor > 0.0 && config.plateau_factor <= 1.0,
          "plateau_factor must lie in (0, 1]");
  require(config.plateau_patience >= 1 && config.early_stop_patience >= 1,
          "patience values must be at least 1");
  require(config.max_epochs >= 1, "max_epochs must be at least 1");
  require(config.split_fraction > 0.0 && config.split_fraction < 1.0,
          "split_fraction must lie in (0, 1)");
}

// ---- Conv2d ----

void Conv2d::init(int in, int out, int k, Rng& rng) {
  in_ch = in;
  out_ch = out;
  ksize = k;
  w = Tensor({out, in, k, k});
  b = Tensor({out});
  const double scale = std::sqrt(2.0 / (static_cast<double>(in) * k * k));
  for (double& v : w.data) v = scale * rng.next_normal();
}

// One accumulation pass per (tap, channel pair) over the whole valid plane
// keeps the hot loop branch-free and contiguous.
Tensor Conv2d::forward(const Tensor& x) {
  require(x.ndim() == 4 && x.dim(1) == in_ch, "conv2d: input shape mismatch");
  x_ = x;
  const int B = x.dim(0), H = x.dim(2), W = x.dim(3), p = ksize / 2;
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor out({B, out_ch, H, W});
  for (int n = 0; n < B; ++n)
    for (int oc = 0; oc < out_ch; ++oc) {
      double* op = &out.data[(static_cast<size_t>(n) * out_ch + oc) * plane];
      std::fill(op, op + plane, b.data[oc]);
      for (int ic = 0; ic < in_ch; ++ic) {
        const double* xp = &x.data[(static_cast<size_t>(n) * in_ch + ic) * plane];
        for (int kr = 0; kr < ksize; ++kr)
          for (int kc = 0; kc < ksize; ++kc) {
            const double wv = w.at(oc, ic, kr, kc);
            const int dr = kr - p, dc = kc - p;
            const int r0 = std::max(0, -dr), r1 = std::min(H, H - dr);
            const int c0 = std::max(0, -dc), c1 = std::min(W, W - dc);
            for (int r = r0; r < r1; ++r) {
              double* orow = op + static_cast<size_t>(r) * W;
              const double* xrow = xp + static_cast<size_t>(r + dr) * W + dc;
              for (int c = c0; c < c1; ++c) orow[c] += wv * xrow[c];
            }
          }
      }
    }
  return out;
}

Tensor Conv2d::backward(const Tensor& gout) {
  require(x_.ndim() == 4, "conv2d: backward before forward");
  w.ensure_grad();
  b.ensure_grad();
  const int B = x_.dim(0), H = x_.dim(2), W = x_.dim(3), p = ksize / 2;
  const size_t plane = static_cast<size_t>(H) * W;
  Tensor gx(x_.shape);
  for (int n = 0; n < B; ++n)
    for (int oc = 0; oc < out_ch; ++oc) {
      const double* gp = &gout.data[(static_cast<size_t>(n) * out_ch + oc) * plane];
      double bsum = 0.0;
      for (size_t i = 0; i < plane; ++i) bsum += gp[i];
      b.grad[oc] += bsum;
      for (int ic = 0; ic < in_ch; ++ic) {
        const double* xp = &x_.data[(static_cast<size_t>(n) * in_ch + ic) * plane];
        double* gxp = &gx.data[(static_cast<size_t>(n) * in_ch + ic) * plane];
        for (int kr = 0; kr < ksize; ++kr)
          for (int kc = 0; kc < ksize; ++kc) {
            const size_t wi = ((static_cast<size_t>(oc) * in_ch + ic) * ksize + kr) * ksize + kc;
            const double wv = w.data[wi];
            const int dr = kr - p, dc = kc - p;
            const int r0 = std::max(0, -dr), r1 = std::min(H, H - dr);
            const int c0 = std::max(0, -dc), c1 = std::min(W, W - dc);
            double wgrad = 0.0;
            for (int r = r0; r < r1; ++r) {
              const double* grow = gp + static_cast<size_t>(r) * W;
              const double* xrow = xp + static_cast<size_t>(r + dr) * W + dc;
              double* gxrow = gxp + static_cast<size_t>(r + dr) * W + dc;
              for (int c = c0; c < c1; ++c) {
                wgrad += grow[c] * xrow[c];
                gxrow[c] += wv * grow[c];
              }
            }
            w.grad[wi] += wgrad;
          }
      }
    }
  return gx;
}

// ---- BatchNorm2d ----

void BatchNorm2d::init(int channels) {
  gamma = Tensor({channels}, 1.0);
  beta = Tensor({channels}, 0.0);
  running_mean = Tensor({channels}, 0.0);
  running_var = Tensor({channels}, 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(C == static_cast<int>(gamma.size()), "batch norm: channel mismatch");
  Tensor out(x.shape);
  if (!train) {
    xhat_ = Tensor();
    for (int c = 0; c < C; ++c) {
      const double rstd = 1.0 / std::sqrt(running_var.data[c] + eps);
      const double mu = running_mean.data[c];
      for (int n = 0; n < B; ++n)
        for (int r = 0; r < H; ++r)
          for (int k = 0; k < W; ++k)
            out.at(n, c, r, k) = gamma.data[c] * (x.at(n, c, r, k) - mu) * rstd + beta.data[c];
    }
    return out;
  }

  require(B >= 2, "batch norm needs a batch of at least 2 in train mode");
  xhat_ = Tensor(x.shape);
  inv_std_.assign(C, 0.0);
  const double count = static_cast<double>(B) * H * W;
  for (int c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int n = 0; n < B; ++n)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) {
          const double v = x.at(n, c, r, k);
          sum += v;
          sq += v * v;
        }
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    inv_std_[c] = 1.0 / std::sqrt(var + eps);
    running_mean.data[c] = (1.0 - momentum) * running_mean.data[c] + momentum * mean;
    running_var.data[c] = (1.0 - momentum) * running_var.data[c] + momentum * var;
    for (int n = 0; n < B; ++n)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) {
          const double xh = (x.at(n, c, r, k) - mean) * inv_std_[c];
          xhat_.at(n, c, r, k) = xh;
          out.at(n, c, r, k) = gamma.data[c] * xh + beta.data[c];
        }
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& gout) {
  require(xhat_.size() == gout.size(), "batch norm: backward needs a train-mode forward");
  gamma.ensure_grad();
  beta.ensure_grad();
  const int B = gout.dim(0), C = gout.dim(1), H = gout.dim(2), W = gout.dim(3);
  const double count = static_cast<double>(B) * H * W;
  Tensor gx(gout.shape);
  for (int c = 0; c < C; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int n = 0; n < B; ++n)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) {
          const double g = gout.at(n, c, r, k);
          sum_g += g;
          sum_gx += g * xhat_.at(n, c, r, k);
        }
    gamma.grad[c] += sum_gx;
    beta.grad[c] += sum_g;
    const double scale = gamma.data[c] * inv_std_[c] / count;
    for (int n = 0; n < B; ++n)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k)
          gx.at(n, c, r, k) = scale * (count * gout.at(n, c, r, k) - sum_g -
                                       xhat_.at(n, c, r, k) * sum_gx);
  }
  return gx;
}

// ---- PReLU ----

void PReLU::init(int channels) { a = Tensor({channels}, 0.25); }

Tensor PReLU::forward(const Tensor& x) {
  require(x.dim(1) == static_cast<int>(a.size()), "prelu: channel mismatch");
  x_ = x;
  Tensor out(x.shape);
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) {
          const double v = x.at(n, c, r, k);
          out.at(n, c, r, k) = v > 0.0 ? v : a.data[c] * v;
        }
  return out;
}

Tensor PReLU::backward(const Tensor& gout) {
  a.ensure_grad();
  Tensor gx(x_.shape);
  const int B = x_.dim(0), C = x_.dim(1), H = x_.dim(2), W = x_.dim(3);
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < H; ++r)
        for (int k = 0; k < W; ++k) {
          const double v = x_.at(n, c, r, k);
          const double g = gout.at(n, c, r, k);
          if (v > 0.0) {
            gx.at(n, c, r, k) = g;
          } else {
            gx.at(n, c, r, k) = a.data[c] * g;
            a.grad[c] += g * v;
          }
        }
  return gx;
}

// ---- Dropout ----

Tensor Dropout::forward(const Tensor& x, bool train, Rng* rng) {
  if (!train || rate == 0.0) {
    identity_ = true;
    return x;
  }
  require(rng != nullptr, "dropout needs an rng in train mode");
  identity_ = false;
  scale_ = 1.0 / (1.0 - rate);
  keep_.resize(x.size());
  Tensor out(x.shape);
  for (size_t i = 0; i < x.size(); ++i) {
    keep_[i] = rng->next_double() >= rate;
    out.data[i] = keep_[i] ? x.data[i] * scale_ : 0.0;
  }
  return out;
}

Tensor Dropout::backward(const Tensor& gout) {
  if (identity_) return gout;
  require(keep_.size() == gout.size(), "dropout: backward shape mismatch");
  Tensor gx(gout.shape);
  for (size_t i = 0; i < gout.size(); ++i) gx.data[i] = keep_[i] ? gout.data[i] * scale_ : 0.0;
  return gx;
}

// ---- MaxPool2d ----

Tensor MaxPool2d::forward(const Tensor& x) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "max pool needs even spatial dims");
  in_shape_ = x.shape;
  Tensor out({B, C, H / 2, W / 2});
  argmax_.resize(out.size());
  size_t o = 0;
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < H / 2; ++r)
        for (int k = 0; k < W / 2; ++k) {
          double best = -std::numeric_limits<double>::infinity();
          size_t best_i = 0;
          for (int dr = 0; dr < 2; ++dr)
            for (int dc = 0; dc < 2; ++dc) {
              const size_t i = ((static_cast<size_t>(n) * C + c) * H + 2 * r + dr) * W + 2 * k + dc;
              if (x.data[i] > best) {
                best = x.data[i];
                best_i = i;
              }
            }
          out.data[o] = best;
          argmax_[o++] = best_i;
        }
  return out;
}

Tensor MaxPool2d::backward(const Tensor& gout) {
  require(gout.size() == argmax_.size(), "max pool: backward shape mismatch");
  Tensor gx(in_shape_);
  for (size_t o = 0; o < gout.size(); ++o) gx.data[argmax_[o]] += gout.data[o];
  return gx;
}

// ---- nearest-neighbor 2x upsampling ----

Tensor upsample_nearest2x(const Tensor& x) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out({B, C, 2 * H, 2 * W});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < 2 * H; ++r)
        for (int k = 0; k < 2 * W; ++k) out.at(n, c, r, k) = x.at(n, c, r / 2, k / 2);
  return out;
}

Tensor upsample_nearest2x_backward(const Tensor& gout) {
  const int B = gout.dim(0), C = gout.dim(1), H = gout.dim(2) / 2, W = gout.dim(3) / 2;
  Tensor gx({B, C, H, W});
  for (int n = 0; n < B; ++n)
    for (int c = 0; c < C; ++c)
      for (int r = 0; r < 2 * H; ++r)
        for (int k = 0; k < 2 * W; ++k) gx.at(n, c, r / 2, k / 2) += gout.at(n, c, r, k);
  return gx;
}

// ---- ConvBlock ----

void ConvBlock::init(int in, int out, double dropout_rate, Rng& rng) {
  conv1.init(in, out, 3, rng);
  bn1.init(out);
  act1.init(out);
  drop1.rate = dropout_rate;
  conv2.init(out, out, 3, rng);
  bn2.init(out);
  act2.init(out);
  drop2.rate = dropout_rate;
}

Tensor ConvBlock::forward(const Tensor& x, bool train, Rng* rng) {
  Tensor t = drop1.forward(act1.forward(bn1.forward(conv1.forward(x), train)), train, rng);
  return drop2.forward(act2.forward(bn2.forward(conv2.forward(t), train)), train, rng);
}

Tensor ConvBlock::backward(const Tensor& gout) {
  Tensor g = conv2.backward(bn2.backward(act2.backward(drop2.backward(gout))));
  return conv1.backward(bn1.backward(act1.backward(drop1.backward(g))));
}

// ---- Enhancer ----

Enhancer::Enhancer(const NetworkConfig& config, uint64_t seed) : cfg_(config) {
  validate(cfg_);
  Rng rng(seed);
  enc_.resize(cfg_.depth);
  pools_.resize(cfg_.depth - 1);
  int ch = cfg_.input_channels;
  for (int i = 0; i < cfg_.depth; ++i) {
    const int out = cfg_.base_filters << i;
    enc_[i].init(ch, out, cfg_.dropout_rate, rng);
    ch = out;
  }
  bottleneck_.init(ch, ch, cfg_.dropout_rate, rng);
  upconvs_.resize(cfg_.depth - 1);
  dec_.resize(cfg_.depth - 1);
  for (int i = 0; i < cfg_.depth - 1; ++i) {
    const int fi = cfg_.base_filters << i;
    upconvs_[i].init(2 * fi, fi, 3, rng);
    dec_[i].init(2 * fi, fi, cfg_.dropout_rate, rng);
  }
  final_.init(cfg_.base_filters, 1, 1, rng);
}

Tensor Enhancer::forward(const Tensor& x, bool train, Rng* dropout_rng) {
  require(!enc_.empty(), "enhancer is not initialized");
  require(x.ndim() == 4, "enhancer input must be [batch][channels][rows][cols]");
  require(x.dim(1) == cfg_.input_channels, "enhancer: channel count mismatch");
  const int div = 1 << (cfg_.depth - 1);
  require(x.dim(2) % div == 0 && x.dim(3) % div == 0,
          "enhancer: spatial dims must divide by 2^(depth-1)");
  require(x.dim(2) >= div && x.dim(3) >= div, "enhancer: input too small for depth");

  skips_.assign(cfg_.depth - 1, Tensor());
  Tensor cur = x;
  for (int i = 0; i < cfg_.depth; ++i) {
    if (i > 0) cur = pools_[i - 1].forward(cur);
    cur = enc_[i].forward(cur, train, dropout_rng);
    if (i < cfg_.depth - 1) skips_[i] = cur;
  }

  Tensor res = bottleneck_.forward(cur, train, dropout_rng);
  for (size_t i = 0; i < res.size(); ++i) res.data[i] += cur.data[i];
  cur = std::move(res);

  for (int i = cfg_.depth - 2; i >= 0; --i) {
    cur = upconvs_[i].forward(upsample_nearest2x(cur));
    cur = concat_channels(skips_[i], cur);
    cur = dec_[i].forward(cur, train, dropout_rng);
  }
  return final_.forward(cur);
}

Tensor Enhancer::backward(const Tensor& gout) {
  Tensor g = final_.backward(gout);
  std::vector<Tensor> gskips(cfg_.depth - 1);
  for (int i = 0; i < cfg_.depth - 1; ++i) {
    g = dec_[i].backward(g);
    Tensor gs, gu;
    split_channels(g, cfg_.base_filters << i, gs, gu);
    gskips[i] = std::move(gs);
    g = upsample_nearest2x_backward(upconvs_[i].backward(gu));
  }

  Tensor gblock = bottleneck_.backward(g);
  for (size_t i = 0; i < g.size(); ++i) g.data[i] += gblock.data[i];

  for (int i = cfg_.depth - 1; i >= 0; --i) {
    g = enc_[i].backward(g);
    if (i > 0) {
      g = pools_[i - 1].backward(g);
      for (size_t j = 0; j < g.size(); ++j) g.data[j] += gskips[i - 1].data[j];
    }
  }
  return g;
}

std::vector<ParamRef> Enhancer::parameters() {
  std::vector<ParamRef> out;
  auto add_block = [&out](const std::string& prefix, ConvBlock& blk) {
    out.push_back({prefix + ".conv1.w", &blk.conv1.w, true});
    out.push_back({prefix + ".conv1.b", &blk.conv1.b, true});
    out.push_back({prefix + ".bn1.gamma", &blk.bn1.gamma, true});
    out.push_back({prefix + ".bn1.beta", &blk.bn1.beta, true});
    out.push_back({prefix + ".bn1.running_mean", &blk.bn1.running_mean, false});
    out.push_back({prefix + ".bn1.running_var", &blk.bn1.running_var, false});
    out.push_back({prefix + ".act1.a", &blk.act1.a, true});
    out.push_back({prefix + ".conv2.w", &blk.conv2.w, true});
    out.push_back({prefix + ".conv2.b", &blk.conv2.b, true});
    out.push_back({prefix + ".bn2.gamma", &blk.bn2.gamma, true});
    out.push_back({prefix + ".bn2.beta", &blk.bn2.beta, true});
    out.push_back({prefix + ".bn2.running_mean", &blk.bn2.running_mean, false});
    out.push_back({prefix + ".bn2.running_var", &blk.bn2.running_var, false});
    out.push_back({prefix + ".act2.a", &blk.act2.a, true});
  };
  for (int i = 0; i < cfg_.depth; ++i) add_block("enc" + std::to_string(i), enc_[i]);
  add_block("bottleneck", bottleneck_);
  for (int i = 0; i < cfg_.depth - 1; ++i) {
    out.push_back({"up" + std::to_string(i) + ".w", &upconvs_[i].w, true});
    out.push_back({"up" + std::to_string(i) + ".b", &upconvs_[i].b, true});
    add_block("dec" + std::to_string(i), dec_[i]);
  }
  out.push_back({"final.w", &final_.w, true});
  out.push_back({"final.b", &final_.b, true});
  return out;
}

void Enhancer::zero_grad() {
  for (const ParamRef& p : parameters())
    if (p.trainable) p.tensor->zero_grad();
}

size_t Enhancer::parameter_count() {
  size_t n = 0;
  for (const ParamRef& p : parameters())
    if (p.trainable) n += p.tensor->size();
  return n;
}

// ---- normalization ----

NormalizationScales fit_normalization(const std::vector<TrainingPair>& dataset) {
  require(!dataset.empty(), "cannot fit normalization on an empty dataset");
  const int channels = dataset.front().input.dim(0);
  NormalizationScales s;
  s.input_min.assign(channels, std::numeric_limits<double>::infinity());
  s.input_max.assign(channels, -std::numeric_limits<double>::infinity());
  s.ref_min = std::numeric_limits<double>::infinity();
  s.ref_max = -std::numeric_limits<double>::infinity();
  for (const TrainingPair& pair : dataset) {
    validate_pair(pair);
    require(pair.input.dim(0) == channels, "inconsistent channel counts across dataset");
    for (int c = 0; c < channels; ++c)
      for (int r = 0; r < pair.input.dim(1); ++r)
        for (int k = 0; k < pair.input.dim(2); ++k) {
          const double v = pair.input.at(c, r, k);
          s.input_min[c] = std::min(s.input_min[c], v);
          s.input_max[c] = std::max(s.input_max[c], v);
        }
    s.ref_min = std::min(s.ref_min, pair.reference.min_value());
    s.ref_max = std::max(s.ref_max, pair.reference.max_value());
  }
  return s;
}

Tensor normalize_input(const Tensor& input, const NormalizationScales& scales) {
  require(input.ndim() == 3 && input.dim(0) == static_cast<int>(scales.input_min.size()),
          "normalize_input: channel mismatch");
  Tensor out = input;
  for (int c = 0; c < input.dim(0); ++c) {
    const double range = scales.input_max[c] - scales.input_min[c];
    for (int r = 0; r < input.dim(1); ++r)
      for (int k = 0; k < input.dim(2); ++k)
        out.at(c, r, k) = range > 0.0 ? (input.at(c, r, k) - scales.input_min[c]) / range : 0.0;
  }
  return out;
}

Tensor denormalize_input(const Tensor& input, const NormalizationScales& scales) {
  require(input.ndim() == 3 && input.dim(0) == static_cast<int>(scales.input_min.size()),
          "denormalize_input: channel mismatch");
  Tensor out = input;
  for (int c = 0; c < input.dim(0); ++c) {
    const double range = scales.input_max[c] - scales.input_min[c];
    for (int r = 0; r < input.dim(1); ++r)
      for (int k = 0; k < input.dim(2); ++k)
        out.at(c, r, k) = input.at(c, r, k) * (range > 0.0 ? range : 0.0) + scales.input_min[c];
  }
  return out;
}

RealImage normalize_reference(const RealImage& ref, const NormalizationScales& scales) {
  const double range = scales.ref_max - scales.ref_min;
  RealImage out(ref.rows(), ref.cols());
  for (size_t i = 0; i < ref.size(); ++i)
    out.data()[i] = range > 0.0 ? (ref.data()[i] - scales.ref_min) / range : 0.0;
  return out;
}

RealImage denormalize_output(const RealImage& out, const NormalizationScales& scales) {
  const double range = scales.ref_max - scales.ref_min;
  RealImage im(out.rows(), out.cols());
  for (size_t i = 0; i < out.size(); ++i)
    im.data()[i] = out.data()[i] * (range > 0.0 ? range : 0.0) + scales.ref_min;
  return im;
}

// ---- Adam ----

Adam::Adam(std::vector<ParamRef> params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (ParamRef& p : params)
    if (p.trainable) params_.push_back(p);
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].tensor->size(), 0.0);
    v_[i].assign(params_[i].tensor->size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = *params_[i].tensor;
    require(t.grad.size() == t.data.size(), "adam: missing gradient for " + params_[i].name);
    for (size_t j = 0; j < t.data.size(); ++j) {
      const double g = t.grad[j];
      m_[i][j] = b1_ * m_[i][j] + (1.0 - b1_) * g;
      v_[i][j] = b2_ * v_[i][j] + (1.0 - b2_) * g * g;
      t.data[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
    }
  }
}

// ---- PlateauScheduler ----

PlateauScheduler::PlateauScheduler(double lr, double factor, int plateau_patience,
                                   int early_stop_patience)
    : lr_(lr), factor_(factor), plateau_patience_(plateau_patience),
      early_patience_(early_stop_patience) {}

void PlateauScheduler::observe(double val_loss) {
  ++epoch_;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    bad_plateau_ = 0;
    bad_early_ = 0;
    return;
  }
  if (++bad_plateau_ >= plateau_patience_) {
    lr_ *= factor_;
    bad_plateau_ = 0;
  }
  if (++bad_early_ >= early_patience_) stop_ = true;
}

// ---- training ----

TrainResult train(const std::vector<TrainingPair>& dataset, const NetworkConfig& net_config,
                  const TrainConfig& train_config, const LossWeights& loss_weights) {
  validate(net_config);
  validate(train_config);
  require(!dataset.empty(), "training dataset is empty");

  const int rows = dataset.front().reference.rows();
  const int cols = dataset.front().reference.cols();
  const int div = 1 << (net_config.depth - 1);
  require(rows % div == 0 && cols % div == 0,
          "image dims must divide by 2^(depth-1) for this network depth");
  for (const TrainingPair& pair : dataset) {
    validate_pair(pair);
    require(pair.input.dim(0) == net_config.input_channels,
            "dataset channels do not match the network input channels");
    require(pair.reference.rows() == rows && pair.reference.cols() == cols,
            "dataset holds mixed image shapes");
  }

  TrainResult result;
  result.scales = fit_normalization(dataset);
  std::vector<Tensor> inputs;
  std::vector<RealImage> refs;
  inputs.reserve(dataset.size());
  refs.reserve(dataset.size());
  for (const TrainingPair& pair : dataset) {
    inputs.push_back(normalize_input(pair.input, result.scales));
    refs.push_back(normalize_reference(pair.reference, result.scales));
  }

  // split
  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(train_config.seed, 0, 8));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[split_rng.next_below(static_cast<uint64_t>(i) + 1)]);
  int n_train = std::min<int>(n, std::max<int>(
      2, static_cast<int>(std::floor(n * train_config.split_fraction))));
  require(n_train >= 2, "training needs at least 2 samples");
  std::vector<int> train_idx(order.begin(), order.begin() + n_train);
  std::vector<int> val_idx(order.begin() + n_train, order.end());
  if (val_idx.empty()) val_idx = train_idx;

  Enhancer net(net_config, derive_seed(train_config.seed, 1, 8));
  Adam adam(net.parameters(), train_config.initial_lr);
  PlateauScheduler sched(train_config.initial_lr, train_config.plateau_factor,
                         train_config.plateau_patience, train_config.early_stop_patience);
  FeatureExtractor extractor;

  for (int epoch = 0; epoch < train_config.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(train_config.seed, static_cast<uint64_t>(epoch), 9));
    for (int i = n_train - 1; i > 0; --i)
      std::swap(train_idx[i], train_idx[shuffle_rng.next_below(static_cast<uint64_t>(i) + 1)]);

    // batch boundaries; an undersized tail folds into the previous batch
    std::vector<std::pair<int, int>> batches;
    for (int b = 0; b < n_train; b += train_config.batch_size)
      batches.emplace_back(b, std::min(b + train_config.batch_size, n_train));
    if (batches.size() >= 2 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    adam.set_lr(sched.lr());
    double loss_sum = 0.0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const auto [begin, end] = batches[bi];
      const int bsize = end - begin;
      Tensor x({bsize, net_config.input_channels, rows, cols});
      for (int b = 0; b < bsize; ++b) {
        const Tensor& src = inputs[train_idx[begin + b]];
        for (int c = 0; c < net_config.input_channels; ++c)
          for (int r = 0; r < rows; ++r)
            for (int k = 0; k < cols; ++k) x.at(b, c, r, k) = src.at(c, r, k);
      }
      Rng drop_rng(derive_seed(train_config.seed,
                               static_cast<uint64_t>(epoch) * 1000003ull + bi, 10));
      Tensor out = net.forward(x, true, &drop_rng);
      if (!out.all_finite())
        throw ValidationError("non-finite network output at epoch " + std::to_string(epoch));

      Tensor gout({bsize, 1, rows, cols});
      for (int b = 0; b < bsize; ++b) {
        const LossValue l =
            composite_loss(slice_to_image(out, b), refs[train_idx[begin + b]], loss_weights,
                           extractor);
        if (!std::isfinite(l.value))
          throw ValidationError("non-finite training loss at epoch " + std::to_string(epoch));
        loss_sum += l.value;
        for (int r = 0; r < rows; ++r)
          for (int k = 0; k < cols; ++k) gout.at(b, 0, r, k) = l.gradient.at(r, k) / bsize;
      }
      net.zero_grad();
      net.backward(gout);
      adam.step();
    }

    double val_sum = 0.0;
    for (int idx : val_idx) {
      Tensor x({1, net_config.input_channels, rows, cols});
      for (int c = 0; c < net_config.input_channels; ++c)
        for (int r = 0; r < rows; ++r)
          for (int k = 0; k < cols; ++k) x.at(0, c, r, k) = inputs[idx].at(c, r, k);
      const Tensor out = net.forward(x, false, nullptr);
      const LossValue l = composite_loss(slice_to_image(out, 0), refs[idx], loss_weights,
                                         extractor);
      if (!std::isfinite(l.value))
        throw ValidationError("non-finite validation loss at epoch " + std::to_string(epoch));
      val_sum += l.value;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / n_train;
    stats.val_loss = val_sum / static_cast<double>(val_idx.size());
    stats.lr = sched.lr();
    result.history.push_back(stats);

    sched.observe(stats.val_loss);
    if (sched.should_stop()) break;
  }

  result.net = std::move(net);
  result.best_epoch = sched.best_epoch();
  result.best_val_loss = sched.best_loss();
  return result;
}

}  // namespace rtrecon
