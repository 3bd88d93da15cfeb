#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rtrecon/enhancer.hpp"
#include "rtrecon/errors.hpp"
#include "rtrecon/rng.hpp"

using namespace rtrecon;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-8});
}

// central finite difference of f with respect to *value
double fd_probe(const std::function<double()>& f, double* value, double h) {
  const double save = *value;
  *value = save + h;
  const double fp = f();
  *value = save - h;
  const double fm = f();
  *value = save;
  return (fp - fm) / (2.0 * h);
}

}  // namespace

TEST_CASE("conv2d identity kernel passes input through") {
  Rng rng(1);
  Conv2d conv;
  conv.init(1, 1, 3, rng);
  std::fill(conv.w.data.begin(), conv.w.data.end(), 0.0);
  conv.w.data[4] = 1.0;  // center tap
  std::fill(conv.b.data.begin(), conv.b.data.end(), 0.0);
  const Tensor x = random_tensor({1, 1, 5, 7}, 2);
  const Tensor y = conv.forward(x);
  CHECK(y.data == x.data);
}

TEST_CASE("conv2d averaging kernel attenuates only the zero-padded border") {
  Rng rng(1);
  Conv2d conv;
  conv.init(1, 1, 3, rng);
  std::fill(conv.w.data.begin(), conv.w.data.end(), 1.0 / 9.0);
  std::fill(conv.b.data.begin(), conv.b.data.end(), 0.0);
  const Tensor x({1, 1, 5, 6}, 1.0);
  const Tensor y = conv.forward(x);
  CHECK(y.at(0, 0, 2, 3) == doctest::Approx(1.0).epsilon(1e-12));       // interior
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0 / 9.0).epsilon(1e-12));  // corner
  CHECK(y.at(0, 0, 0, 3) == doctest::Approx(6.0 / 9.0).epsilon(1e-12));  // edge
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(3);
  Conv2d conv;
  conv.init(2, 3, 3, rng);
  Tensor x = random_tensor({1, 2, 4, 6}, 4);
  const Tensor proj = random_tensor({1, 3, 4, 6}, 5);
  auto loss = [&] { return dot(conv.forward(x), proj); };

  conv.w.zero_grad();
  conv.b.zero_grad();
  conv.forward(x);
  const Tensor gx = conv.backward(proj);

  Rng pick(6);
  for (int p = 0; p < 10; ++p) {
    const size_t i = pick.next_below(x.size());
    CHECK(rel_err(gx.data[i], fd_probe(loss, &x.data[i], 1e-5)) < 1e-4);
    const size_t wi = pick.next_below(conv.w.size());
    CHECK(rel_err(conv.w.grad[wi], fd_probe(loss, &conv.w.data[wi], 1e-5)) < 1e-4);
  }
  for (size_t bi = 0; bi < conv.b.size(); ++bi)
    CHECK(rel_err(conv.b.grad[bi], fd_probe(loss, &conv.b.data[bi], 1e-5)) < 1e-4);
}

TEST_CASE("batch norm zeroes a constant batch and tracks running stats") {
  BatchNorm2d bn;
  bn.init(2);
  Tensor x({2, 2, 3, 3}, 0.0);
  for (size_t i = 0; i < x.size(); ++i) x.data[i] = i < x.size() / 2 ? 5.0 : -2.0;  // per channel?
  // make channel 0 constant 5, channel 1 constant -2 across the whole batch
  for (int n = 0; n < 2; ++n)
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) {
        x.at(n, 0, r, k) = 5.0;
        x.at(n, 1, r, k) = -2.0;
      }
  const Tensor y = bn.forward(x, true);
  for (double v : y.data) CHECK(std::abs(v) < 1e-3);

  // running stats after one pass: (1-m)*init + m*batch
  CHECK(bn.running_mean.data[0] == doctest::Approx(0.1 * 5.0).epsilon(1e-12));
  CHECK(bn.running_mean.data[1] == doctest::Approx(0.1 * -2.0).epsilon(1e-12));
  CHECK(bn.running_var.data[0] == doctest::Approx(0.9 * 1.0).epsilon(1e-12));

  // eval mode applies the running affine map
  Tensor probe({1, 2, 1, 1});
  probe.at(0, 0, 0, 0) = 1.0;
  probe.at(0, 1, 0, 0) = 1.0;
  const Tensor e = bn.forward(probe, false);
  const double want0 = (1.0 - bn.running_mean.data[0]) / std::sqrt(bn.running_var.data[0] + 1e-5);
  CHECK(e.at(0, 0, 0, 0) == doctest::Approx(want0).epsilon(1e-12));

  CHECK_THROWS_AS(bn.forward(Tensor({1, 2, 3, 3}, 1.0), true), ValidationError);  // batch of 1
  CHECK_NOTHROW(bn.forward(Tensor({1, 2, 3, 3}, 1.0), false));
}

TEST_CASE("norm/act sub-block gradients match finite differences") {
  BatchNorm2d bn;
  bn.init(2);
  PReLU act;
  act.init(2);
  Tensor x = random_tensor({2, 2, 4, 4}, 7);
  const Tensor proj = random_tensor({2, 2, 4, 4}, 8);
  auto loss = [&] { return dot(act.forward(bn.forward(x, true)), proj); };

  bn.gamma.zero_grad();
  bn.beta.zero_grad();
  act.a.zero_grad();
  act.forward(bn.forward(x, true));
  const Tensor g_act = act.backward(proj);
  const Tensor gx2 = bn.backward(g_act);

  Rng pick(9);
  for (int p = 0; p < 12; ++p) {
    const size_t i = pick.next_below(x.size());
    CHECK(rel_err(gx2.data[i], fd_probe(loss, &x.data[i], 1e-5)) < 1e-4);
  }
  for (int c = 0; c < 2; ++c) {
    CHECK(rel_err(bn.gamma.grad[c], fd_probe(loss, &bn.gamma.data[c], 1e-5)) < 1e-4);
    CHECK(rel_err(bn.beta.grad[c], fd_probe(loss, &bn.beta.data[c], 1e-5)) < 1e-4);
    CHECK(rel_err(act.a.grad[c], fd_probe(loss, &act.a.data[c], 1e-5)) < 1e-4);
  }
}

TEST_CASE("prelu keeps positives and scales negatives by the slope") {
  PReLU act;
  act.init(1);
  act.a.data[0] = 0.25;
  Tensor x({1, 1, 1, 4});
  x.data = {2.0, -4.0, 0.0, 0.5};
  const Tensor y = act.forward(x);
  CHECK(y.data[0] == 2.0);
  CHECK(y.data[1] == -1.0);
  CHECK(y.data[2] == 0.0);
  CHECK(y.data[3] == 0.5);
}

TEST_CASE("dropout drops, rescales, and backpropagates its own mask") {
  Dropout drop;
  drop.rate = 0.3;
  Rng rng(10);
  const Tensor x = random_tensor({1, 4, 50, 50}, 11, 0.5, 1.5);
  const Tensor y = drop.forward(x, true, &rng);

  int zeroed = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (y.data[i] == 0.0) {
      ++zeroed;
    } else {
      CHECK(y.data[i] == doctest::Approx(x.data[i] / 0.7).epsilon(1e-12));
    }
  }
  const double frac = static_cast<double>(zeroed) / x.size();
  CHECK(frac > 0.27);
  CHECK(frac < 0.33);

  // backward applies the cached mask: gx * x == g * y elementwise
  const Tensor g = random_tensor(x.shape, 12);
  const Tensor gx = drop.backward(g);
  for (size_t i = 0; i < x.size(); ++i)
    CHECK(gx.data[i] * x.data[i] == doctest::Approx(g.data[i] * y.data[i]).epsilon(1e-9));

  // eval and rate-0 are identities
  const Tensor ye = drop.forward(x, false, nullptr);
  CHECK(ye.data == x.data);
  Dropout zero;
  zero.rate = 0.0;
  CHECK(zero.forward(x, true, nullptr).data == x.data);

  Dropout no_rng;
  no_rng.rate = 0.1;
  CHECK_THROWS_AS(no_rng.forward(x, true, nullptr), ValidationError);
}

TEST_CASE("max pool picks maxima and routes gradients to them") {
  MaxPool2d pool;
  Tensor x({1, 1, 2, 4});
  x.data = {1.0, 3.0, 2.0, 2.5, 4.0, 0.5, -1.0, 0.0};
  const Tensor y = pool.forward(x);
  REQUIRE(y.shape == std::vector<int>{1, 1, 1, 2});
  CHECK(y.data[0] == 4.0);
  CHECK(y.data[1] == 2.5);

  Tensor g({1, 1, 1, 2});
  g.data = {10.0, 20.0};
  const Tensor gx = pool.backward(g);
  CHECK(gx.data == std::vector<double>{0.0, 0.0, 0.0, 20.0, 10.0, 0.0, 0.0, 0.0});

  // finite differences away from ties
  Tensor xr = random_tensor({2, 3, 4, 4}, 13);
  const Tensor proj = random_tensor({2, 3, 2, 2}, 14);
  auto loss = [&] { return dot(pool.forward(xr), proj); };
  pool.forward(xr);
  const Tensor gxr = pool.backward(proj);
  Rng pick(15);
  for (int p = 0; p < 12; ++p) {
    const size_t i = pick.next_below(xr.size());
    CHECK(rel_err(gxr.data[i], fd_probe(loss, &xr.data[i], 1e-6)) < 1e-4);
  }
}

TEST_CASE("nearest upsampling replicates and its backward is the exact adjoint") {
  Tensor x({1, 1, 2, 2});
  x.data = {1.0, 2.0, 3.0, 4.0};
  const Tensor y = upsample_nearest2x(x);
  REQUIRE(y.shape == std::vector<int>{1, 1, 4, 4});
  CHECK(y.at(0, 0, 0, 0) == 1.0);
  CHECK(y.at(0, 0, 0, 1) == 1.0);
  CHECK(y.at(0, 0, 1, 1) == 1.0);
  CHECK(y.at(0, 0, 3, 2) == 4.0);

  const Tensor a = random_tensor({2, 3, 4, 5}, 16);
  const Tensor g = random_tensor({2, 3, 8, 10}, 17);
  CHECK(dot(upsample_nearest2x(a), g) ==
        doctest::Approx(dot(a, upsample_nearest2x_backward(g))).epsilon(1e-12));
}

TEST_CASE("enhancer output matches input spatial shape and eval is deterministic") {
  NetworkConfig cfg;
  cfg.depth = 3;
  cfg.base_filters = 8;
  cfg.input_channels = 2;
  Enhancer net(cfg, 21);
  const Tensor x = random_tensor({1, 2, 64, 48}, 22, 0.0, 1.0);
  Tensor a = net.forward(x);
  REQUIRE(a.shape == std::vector<int>{1, 1, 64, 48});
  Tensor b = net.forward(x);
  CHECK(a.data == b.data);

  CHECK_THROWS_AS(net.forward(random_tensor({1, 2, 30, 48}, 23)), ValidationError);
  CHECK_THROWS_AS(net.forward(random_tensor({1, 1, 64, 48}, 24)), ValidationError);
  CHECK_THROWS_AS(net.forward(random_tensor({1, 2, 64, 48}, 25), true, nullptr),
                  ValidationError);  // train needs batch >= 2
}

TEST_CASE("whole-network gradients match finite differences") {
  NetworkConfig cfg;
  cfg.depth = 2;
  cfg.base_filters = 2;
  cfg.dropout_rate = 0.0;
  cfg.input_channels = 1;
  Enhancer net(cfg, 31);
  Tensor x = random_tensor({2, 1, 8, 8}, 32, 0.0, 1.0);
  const Tensor proj = random_tensor({2, 1, 8, 8}, 33);

  auto loss = [&] { return dot(net.forward(x, true, nullptr), proj); };
  net.zero_grad();
  net.forward(x, true, nullptr);
  const Tensor gx = net.backward(proj);

  Rng pick(34);
  int probes = 0;
  for (const ParamRef& p : net.parameters()) {
    if (!p.trainable) continue;
    for (int k = 0; k < 2; ++k) {
      const size_t i = pick.next_below(p.tensor->size());
      const double fd = fd_probe(loss, &p.tensor->data[i], 1e-5);
      const double an = p.tensor->grad[i];
      CAPTURE(p.name);
      CAPTURE(i);
      // conv biases feeding a batch norm are exact zero directions; there both
      // sides are roundoff noise, so accept on a small absolute floor too
      CHECK((rel_err(an, fd) < 1e-3 || (std::abs(an) < 1e-7 && std::abs(fd) < 1e-7)));
      ++probes;
    }
  }
  CHECK(probes >= 60);
  for (int k = 0; k < 10; ++k) {
    const size_t i = pick.next_below(x.size());
    CHECK(rel_err(gx.data[i], fd_probe(loss, &x.data[i], 1e-5)) < 1e-3);
  }
}

TEST_CASE("depth-1 network matches a straight-line oracle with a silenced bottleneck") {
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.base_filters = 2;
  cfg.dropout_rate = 0.0;
  cfg.input_channels = 1;
  Enhancer net(cfg, 41);

  // silence the bottleneck block so the residual shortcut alone carries it
  std::map<std::string, Tensor*> by_name;
  for (const ParamRef& p : net.parameters()) by_name[p.name] = p.tensor;
  for (const char* name : {"bottleneck.conv1.w", "bottleneck.conv1.b", "bottleneck.conv2.w",
                           "bottleneck.conv2.b"})
    std::fill(by_name.at(name)->data.begin(), by_name.at(name)->data.end(), 0.0);

  const int H = 6, W = 5;
  const Tensor x = random_tensor({1, 1, H, W}, 42, 0.0, 1.0);
  const Tensor got = net.forward(x);  // eval mode, running stats are fresh

  // straight-line eval-mode reimplementation of enc0 + final using the same
  // weights: conv3x3 -> bn(mean 0, var 1) -> prelu, twice, then 1x1 conv
  auto conv3 = [&](const std::vector<double>& w, const std::vector<double>& b,
                   const std::vector<std::vector<double>>& in, int in_ch, int out_ch) {
    std::vector<std::vector<double>> out(out_ch, std::vector<double>(H * W, 0.0));
    for (int oc = 0; oc < out_ch; ++oc)
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
          double acc = b[oc];
          for (int ic = 0; ic < in_ch; ++ic)
            for (int kr = 0; kr < 3; ++kr)
              for (int kc = 0; kc < 3; ++kc) {
                const int rr = r + kr - 1, cc = c + kc - 1;
                if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
                acc += w[((static_cast<size_t>(oc) * in_ch + ic) * 3 + kr) * 3 + kc] *
                       in[ic][rr * W + cc];
              }
          out[oc][r * W + c] = acc;
        }
    return out;
  };
  auto bn_eval_prelu = [&](std::vector<std::vector<double>>& maps, const std::string& bn,
                           const std::string& act) {
    const Tensor& gamma = *by_name.at("enc0." + bn + ".gamma");
    const Tensor& beta = *by_name.at("enc0." + bn + ".beta");
    const Tensor& slope = *by_name.at("enc0." + act + ".a");
    for (size_t c = 0; c < maps.size(); ++c)
      for (double& v : maps[c]) {
        v = gamma.data[c] * v / std::sqrt(1.0 + 1e-5) + beta.data[c];
        if (v < 0.0) v *= slope.data[c];
      }
  };

  std::vector<std::vector<double>> cur(1, std::vector<double>(H * W));
  for (int i = 0; i < H * W; ++i) cur[0][i] = x.data[i];
  cur = conv3(by_name.at("enc0.conv1.w")->data, by_name.at("enc0.conv1.b")->data, cur, 1, 2);
  bn_eval_prelu(cur, "bn1", "act1");
  cur = conv3(by_name.at("enc0.conv2.w")->data, by_name.at("enc0.conv2.b")->data, cur, 2, 2);
  bn_eval_prelu(cur, "bn2", "act2");

  const Tensor& fw = *by_name.at("final.w");
  const Tensor& fb = *by_name.at("final.b");
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double want = fb.data[0] + fw.data[0] * cur[0][r * W + c] + fw.data[1] * cur[1][r * W + c];
      CHECK(got.at(0, 0, r, c) == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("parameter counts match hand-derived totals") {
  NetworkConfig tiny;
  tiny.depth = 1;
  tiny.base_filters = 2;
  tiny.input_channels = 1;
  Enhancer small(tiny, 1);
  // enc0 9*2*(1+2)+8*2=70, bottleneck 9*2*(2+2)+8*2=88, final 2+1=3
  CHECK(small.parameter_count() == 161);

  NetworkConfig paper;
  paper.depth = 5;
  paper.base_filters = 32;
  paper.input_channels = 2;
  Enhancer big(paper, 1);
  CHECK(big.parameter_count() == 13361729);

  // every trainable tensor appears under a unique name
  std::map<std::string, int> seen;
  for (const ParamRef& p : big.parameters()) seen[p.name]++;
  for (const auto& [name, count] : seen) {
    CAPTURE(name);
    CHECK(count == 1);
  }
  CHECK(seen.count("bottleneck.conv1.w") == 1);
  CHECK(seen.count("up3.w") == 1);
  CHECK(seen.count("dec0.bn2.running_var") == 1);
}

TEST_CASE("adam follows the constant-gradient closed form") {
  Tensor t({2});
  t.data = {1.0, -3.0};
  t.ensure_grad();
  Adam adam({{"p", &t, true}}, 0.01);
  const double g0 = 2.0, g1 = -0.5;
  for (int s = 1; s <= 3; ++s) {
    t.grad = {g0, g1};
    adam.step();
    // constant gradient: bias corrections cancel, each step is lr*g/(|g|+eps)
    CHECK(t.data[0] == doctest::Approx(1.0 - s * 0.01 * g0 / (std::abs(g0) + 1e-8)).epsilon(1e-10));
    CHECK(t.data[1] ==
          doctest::Approx(-3.0 - s * 0.01 * g1 / (std::abs(g1) + 1e-8)).epsilon(1e-10));
  }
}

TEST_CASE("plateau scheduler reduces the rate and signals early stop") {
  PlateauScheduler sched(1.0, 0.5, 3, 7);
  sched.observe(10.0);  // first observation improves on infinity
  CHECK(sched.lr() == 1.0);
  sched.observe(10.0);
  sched.observe(10.0);
  CHECK(sched.lr() == 1.0);  // two bad epochs, patience is 3
  sched.observe(10.0);
  CHECK(sched.lr() == 0.5);  // third bad epoch triggers the cut
  CHECK(!sched.should_stop());
  sched.observe(10.0);
  sched.observe(10.0);
  sched.observe(10.0);
  CHECK(sched.lr() == 0.25);  // counter reset after each cut
  sched.observe(10.0);        // 7th bad epoch in a row
  CHECK(sched.should_stop());
  CHECK(sched.best_epoch() == 1);
  CHECK(sched.best_loss() == 10.0);

  PlateauScheduler improving(1.0, 0.5, 2, 3);
  for (double l : {5.0, 4.0, 3.0, 2.0, 1.0}) improving.observe(l);
  CHECK(improving.lr() == 1.0);
  CHECK(!improving.should_stop());
  CHECK(improving.best_epoch() == 5);
}

TEST_CASE("normalization maps to the unit range and inverts") {
  std::vector<TrainingPair> dataset;
  Rng rng(51);
  for (int i = 0; i < 3; ++i) {
    TrainingPair pair;
    pair.input = Tensor({2, 8, 8});
    for (double& v : pair.input.data) v = rng.uniform(-2.0, 5.0);
    pair.reference = RealImage(8, 8);
    for (double& v : pair.reference.data()) v = rng.uniform(0.0, 3.0);
    dataset.push_back(pair);
  }
  // make channel 1 constant to exercise the degenerate range
  for (auto& pair : dataset)
    for (int r = 0; r < 8; ++r)
      for (int k = 0; k < 8; ++k) pair.input.at(1, r, k) = 7.5;

  const NormalizationScales scales = fit_normalization(dataset);
  CHECK(scales.input_min[1] == 7.5);
  CHECK(scales.input_max[1] == 7.5);

  double lo = 1e9, hi = -1e9;
  for (const auto& pair : dataset) {
    const Tensor norm = normalize_input(pair.input, scales);
    for (int r = 0; r < 8; ++r)
      for (int k = 0; k < 8; ++k) {
        lo = std::min(lo, norm.at(0, r, k));
        hi = std::max(hi, norm.at(0, r, k));
        CHECK(norm.at(1, r, k) == 0.0);  // constant channel collapses to zero
      }
    const Tensor back = denormalize_input(norm, scales);
    for (size_t i = 0; i < back.size(); ++i)
      CHECK(back.data[i] == doctest::Approx(pair.input.data[i]).epsilon(1e-6));

    const RealImage nref = normalize_reference(pair.reference, scales);
    CHECK(nref.min_value() >= 0.0);
    CHECK(nref.max_value() <= 1.0);
    const RealImage bref = denormalize_output(nref, scales);
    for (size_t i = 0; i < bref.size(); ++i)
      CHECK(bref.data()[i] == doctest::Approx(pair.reference.data()[i]).epsilon(1e-6));
  }
  CHECK(lo == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));
}

namespace {

// smooth synthetic pairs the network can overfit
std::vector<TrainingPair> toy_dataset(int n_pairs, int size, uint64_t seed) {
  std::vector<TrainingPair> out;
  Rng rng(seed);
  for (int i = 0; i < n_pairs; ++i) {
    const double cr = rng.uniform(0.3, 0.7) * size;
    const double cc = rng.uniform(0.3, 0.7) * size;
    TrainingPair pair;
    pair.reference = RealImage(size, size);
    pair.input = Tensor({2, size, size});
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        const double v = std::exp(-d2 / (2.0 * 9.0));
        pair.reference.at(r, c) = v;
        pair.input.at(0, r, c) = 0.8 * v + 0.1;               // scaled copy
        pair.input.at(1, r, c) = v + 0.05 * rng.next_normal();  // noisy copy
      }
    out.push_back(pair);
  }
  return out;
}

}  // namespace

TEST_CASE("training overfits a toy dataset and is reproducible") {
  const auto dataset = toy_dataset(4, 16, 61);
  NetworkConfig ncfg;
  ncfg.depth = 2;
  ncfg.base_filters = 4;
  ncfg.input_channels = 2;
  TrainConfig tcfg;
  tcfg.batch_size = 4;
  tcfg.initial_lr = 0.0003;
  tcfg.plateau_patience = 100000;  // hold the rate for the whole run
  tcfg.early_stop_patience = 100000;
  tcfg.max_epochs = 500;
  tcfg.seed = 3;

  const TrainResult result = train(dataset, ncfg, tcfg, LossWeights{});
  REQUIRE(result.history.size() == 500);
  const double initial = result.history.front().train_loss;
  const double final = result.history.back().train_loss;
  CAPTURE(initial);
  CAPTURE(final);
  CHECK(final < 0.1 * initial);
  for (const EpochStats& e : result.history) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(std::isfinite(e.val_loss));
    CHECK(e.lr == 0.0003);  // plateau disabled
  }
  CHECK(result.best_epoch >= 1);
  CHECK(result.best_val_loss < initial);
}

TEST_CASE("same seed gives bit-identical trained weights") {
  const auto dataset = toy_dataset(4, 16, 62);
  NetworkConfig ncfg;
  ncfg.depth = 2;
  ncfg.base_filters = 4;
  ncfg.input_channels = 2;
  TrainConfig tcfg;
  tcfg.batch_size = 2;
  tcfg.initial_lr = 0.001;
  tcfg.max_epochs = 3;
  tcfg.seed = 9;

  TrainResult a = train(dataset, ncfg, tcfg, LossWeights{});
  TrainResult b = train(dataset, ncfg, tcfg, LossWeights{});
  const auto pa = a.net.parameters();
  const auto pb = b.net.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CAPTURE(pa[i].name);
    CHECK(pa[i].tensor->data == pb[i].tensor->data);
  }
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
}

TEST_CASE("training rejects bad datasets") {
  NetworkConfig ncfg;
  ncfg.depth = 2;
  ncfg.base_filters = 4;
  ncfg.input_channels = 2;
  TrainConfig tcfg;
  tcfg.max_epochs = 1;

  CHECK_THROWS_AS(train({}, ncfg, tcfg, LossWeights{}), ValidationError);

  auto dataset = toy_dataset(3, 16, 63);
  dataset[1].input.data[7] = std::nan("");
  CHECK_THROWS_AS(train(dataset, ncfg, tcfg, LossWeights{}), ValidationError);

  auto wrong_ch = toy_dataset(3, 16, 64);
  NetworkConfig three = ncfg;
  three.input_channels = 3;
  CHECK_THROWS_AS(train(wrong_ch, three, tcfg, LossWeights{}), ValidationError);

  auto odd = toy_dataset(3, 15, 65);  // 15 not divisible by 2^(depth-1)
  CHECK_THROWS_AS(train(odd, ncfg, tcfg, LossWeights{}), ValidationError);
}
