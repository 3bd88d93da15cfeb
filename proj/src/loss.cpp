#include "rtrecon/loss.hpp"

#include <cmath>
#include <string>

#include "rtrecon/errors.hpp"
#include "rtrecon/rng.hpp"

namespace rtrecon {

namespace {

void check_pair(const RealImage& pred, const RealImage& ref, const char* what) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols())
    throw ValidationError(std::string(what) + ": shape mismatch");
  if (!pred.all_finite() || !ref.all_finite())
    throw ValidationError(std::string(what) + ": non-finite input");
}

// conv 3x3 zero-padded, then relu; returns pre-activation too (relu mask).
FeatureBlock conv_relu(const FeatureBlock& in, const std::vector<double>& w, int out_c,
                       FeatureBlock* pre_out) {
  FeatureBlock out;
  out.channels = out_c;
  out.rows = in.rows;
  out.cols = in.cols;
  out.data.assign(static_cast<size_t>(out_c) * in.rows * in.cols, 0.0);
  FeatureBlock pre = out;
  for (int oc = 0; oc < out_c; ++oc)
    for (int ic = 0; ic < in.channels; ++ic) {
      const double* k = w.data() + (static_cast<size_t>(oc) * in.channels + ic) * 9;
      for (int r = 0; r < in.rows; ++r)
        for (int c = 0; c < in.cols; ++c) {
          double acc = 0.0;
          for (int dr = -1; dr <= 1; ++dr) {
            const int rr = r + dr;
            if (rr < 0 || rr >= in.rows) continue;
            for (int dc = -1; dc <= 1; ++dc) {
              const int cc = c + dc;
              if (cc < 0 || cc >= in.cols) continue;
              acc += k[(dr + 1) * 3 + (dc + 1)] * in.at(ic, rr, cc);
            }
          }
          pre.at(oc, r, c) += acc;
        }
    }
  for (size_t i = 0; i < pre.data.size(); ++i) out.data[i] = std::max(0.0, pre.data[i]);
  if (pre_out) *pre_out = std::move(pre);
  return out;
}

FeatureBlock avg_pool(const FeatureBlock& in) {
  FeatureBlock out;
  out.channels = in.channels;
  out.rows = in.rows / 2;
  out.cols = in.cols / 2;
  out.data.assign(static_cast<size_t>(out.channels) * out.rows * out.cols, 0.0);
  for (int c = 0; c < in.channels; ++c)
    for (int r = 0; r < out.rows; ++r)
      for (int k = 0; k < out.cols; ++k)
        out.at(c, r, k) = 0.25 * (in.at(c, 2 * r, 2 * k) + in.at(c, 2 * r, 2 * k + 1) +
                                  in.at(c, 2 * r + 1, 2 * k) + in.at(c, 2 * r + 1, 2 * k + 1));
  return out;
}

FeatureBlock avg_pool_backward(const FeatureBlock& grad, int in_rows, int in_cols) {
  FeatureBlock out;
  out.channels = grad.channels;
  out.rows = in_rows;
  out.cols = in_cols;
  out.data.assign(static_cast<size_t>(out.channels) * in_rows * in_cols, 0.0);
  for (int c = 0; c < grad.channels; ++c)
    for (int r = 0; r < grad.rows; ++r)
      for (int k = 0; k < grad.cols; ++k) {
        const double g = 0.25 * grad.at(c, r, k);
        out.at(c, 2 * r, 2 * k) = g;
        out.at(c, 2 * r, 2 * k + 1) = g;
        out.at(c, 2 * r + 1, 2 * k) = g;
        out.at(c, 2 * r + 1, 2 * k + 1) = g;
      }
  return out;
}

// d(conv)/d(input): correlate the output gradient with flipped kernels.
FeatureBlock conv_backward_input(const FeatureBlock& grad, const std::vector<double>& w,
                                 int in_c) {
  FeatureBlock out;
  out.channels = in_c;
  out.rows = grad.rows;
  out.cols = grad.cols;
  out.data.assign(static_cast<size_t>(in_c) * grad.rows * grad.cols, 0.0);
  for (int oc = 0; oc < grad.channels; ++oc)
    for (int ic = 0; ic < in_c; ++ic) {
      const double* k = w.data() + (static_cast<size_t>(oc) * in_c + ic) * 9;
      for (int r = 0; r < grad.rows; ++r)
        for (int c = 0; c < grad.cols; ++c) {
          const double g = grad.at(oc, r, c);
          if (g == 0.0) continue;
          for (int dr = -1; dr <= 1; ++dr) {
            const int rr = r + dr;
            if (rr < 0 || rr >= grad.rows) continue;
            for (int dc = -1; dc <= 1; ++dc) {
              const int cc = c + dc;
              if (cc < 0 || cc >= grad.cols) continue;
              out.at(ic, rr, cc) += g * k[(dr + 1) * 3 + (dc + 1)];
            }
          }
        }
    }
  return out;
}

}  // namespace

FeatureExtractor::FeatureExtractor(uint64_t seed) {
  weights_.resize(kBlocks);
  for (int b = 0; b < kBlocks; ++b) {
    const int in_c = in_channels(b);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_c) * 9);
    Rng rng(derive_seed(seed, static_cast<uint64_t>(b), 3));
    weights_[b].resize(static_cast<size_t>(kFilters) * in_c * 9);
    for (double& w : weights_[b]) w = scale * rng.next_normal();
  }
}

FeatureExtractor::FeatureExtractor(std::vector<std::vector<double>> weights)
    : weights_(std::move(weights)) {
  if (static_cast<int>(weights_.size()) != kBlocks)
    throw ValidationError("feature extractor needs exactly 4 filter banks");
  for (int b = 0; b < kBlocks; ++b) {
    const size_t want = static_cast<size_t>(kFilters) * in_channels(b) * 9;
    if (weights_[b].size() != want)
      throw ValidationError("filter bank " + std::to_string(b) + " must hold " +
                            std::to_string(want) + " weights, got " +
                            std::to_string(weights_[b].size()));
    for (double w : weights_[b])
      if (!std::isfinite(w)) throw ValidationError("non-finite feature filter weight");
  }
}

std::array<FeatureBlock, FeatureExtractor::kBlocks> FeatureExtractor::forward(
    const RealImage& image) const {
  if (image.rows() < 16 || image.cols() < 16)
    throw ValidationError("feature extractor needs at least 16x16 input, got " +
                          std::to_string(image.rows()) + "x" + std::to_string(image.cols()));
  FeatureBlock cur;
  cur.channels = 1;
  cur.rows = image.rows();
  cur.cols = image.cols();
  cur.data = image.data();
  std::array<FeatureBlock, kBlocks> out;
  for (int b = 0; b < kBlocks; ++b) {
    FeatureBlock activated = conv_relu(cur, weights_[b], kFilters, nullptr);
    out[b] = avg_pool(activated);
    cur = out[b];
  }
  return out;
}

RealImage FeatureExtractor::backward(const RealImage& image,
                                     const std::array<FeatureBlock, kBlocks>& grads) const {
  // Recompute the forward pass keeping pre-activations, then walk blocks in
  // reverse accumulating the external gradient injected at each block output.
  std::vector<FeatureBlock> inputs(kBlocks);   // input of each block
  std::vector<FeatureBlock> pres(kBlocks);     // conv output before relu
  std::vector<FeatureBlock> activated(kBlocks);
  FeatureBlock cur;
  cur.channels = 1;
  cur.rows = image.rows();
  cur.cols = image.cols();
  cur.data = image.data();
  for (int b = 0; b < kBlocks; ++b) {
    inputs[b] = cur;
    activated[b] = conv_relu(cur, weights_[b], kFilters, &pres[b]);
    cur = avg_pool(activated[b]);
  }

  FeatureBlock grad;  // gradient at the current block's output
  for (int b = kBlocks - 1; b >= 0; --b) {
    if (b == kBlocks - 1) {
      grad = grads[b];
    } else {
      for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += grads[b].data[i];
    }
    FeatureBlock g_act = avg_pool_backward(grad, activated[b].rows, activated[b].cols);
    for (size_t i = 0; i < g_act.data.size(); ++i)
      if (pres[b].data[i] <= 0.0) g_act.data[i] = 0.0;
    grad = conv_backward_input(g_act, weights_[b], in_channels(b));
  }
  RealImage out(image.rows(), image.cols());
  out.data() = grad.data;
  return out;
}

LossValue content_loss(const RealImage& pred, const RealImage& ref,
                       const FeatureExtractor& extractor,
                       const std::array<double, 4>& theta) {
  check_pair(pred, ref, "content_loss");
  auto fp = extractor.forward(pred);
  auto fr = extractor.forward(ref);

  LossValue out;
  std::array<FeatureBlock, FeatureExtractor::kBlocks> grads;
  for (int b = 0; b < FeatureExtractor::kBlocks; ++b) {
    grads[b] = fp[b];
    const double n = static_cast<double>(fp[b].data.size());
    double acc = 0.0;
    for (size_t i = 0; i < fp[b].data.size(); ++i) {
      const double d = fr[b].data[i] - fp[b].data[i];
      acc += d * d;
      grads[b].data[i] = theta[b] * 2.0 * (fp[b].data[i] - fr[b].data[i]) / n;
    }
    out.value += theta[b] * acc / n;
  }
  out.gradient = extractor.backward(pred, grads);
  return out;
}

LossValue l1_loss(const RealImage& pred, const RealImage& ref) {
  check_pair(pred, ref, "l1_loss");
  LossValue out;
  out.gradient = RealImage(pred.rows(), pred.cols());
  const double n = static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data()[i] - ref.data()[i];
    out.value += std::abs(d);
    out.gradient.data()[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
  }
  out.value /= n;
  return out;
}

LossValue composite_loss(const RealImage& pred, const RealImage& ref,
                         const LossWeights& weights, const FeatureExtractor& extractor) {
  check_pair(pred, ref, "composite_loss");
  LossValue out;
  out.gradient = RealImage(pred.rows(), pred.cols());

  if (weights.alpha != 0.0) {
    LossValue content = content_loss(pred, ref, extractor, weights.theta);
    out.value += weights.alpha * content.value;
    for (size_t i = 0; i < out.gradient.size(); ++i)
      out.gradient.data()[i] += weights.alpha * content.gradient.data()[i];
  }
  if (weights.beta != 0.0) {
    LossValue l1 = l1_loss(pred, ref);
    out.value += weights.beta * l1.value;
    for (size_t i = 0; i < out.gradient.size(); ++i)
      out.gradient.data()[i] += weights.beta * l1.gradient.data()[i];
  }
  if (weights.gamma != 0.0) {
    SsimResult s = ssim(pred, ref);
    out.value += weights.gamma * (1.0 - s.mean);
    for (size_t i = 0; i < out.gradient.size(); ++i)
      out.gradient.data()[i] -= weights.gamma * s.gradient.data()[i];
  }
  return out;
}

}  // namespace rtrecon
