#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "rtrecon/grid.hpp"
#include "rtrecon/rng.hpp"

using namespace rtrecon;

namespace {

CoilImageStack random_stack(int n_coils, int rows, int cols, uint64_t seed) {
  CoilImageStack s(n_coils, rows, cols);
  Rng rng(seed);
  for (cplx& z : s.data()) z = cplx(rng.next_normal(), rng.next_normal());
  return s;
}

double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("construction validates dimensions") {
  CHECK_THROWS_AS(KSpaceGrid(0, 16, 16), ValidationError);
  CHECK_THROWS_AS(KSpaceGrid(1, 7, 16), ValidationError);
  CHECK_THROWS_AS(KSpaceGrid(1, 16, 7), ValidationError);
  CHECK_THROWS_AS(CoilImageStack(1, 4, 4), ValidationError);
  KSpaceGrid g(2, 8, 8);
  CHECK(g.size() == 2u * 8u * 8u);
  CHECK(g.at(1, 3, 4) == cplx(0.0, 0.0));
  CHECK(g.line_axis() == LineAxis::kCols);
  CHECK(g.n_lines() == 8);
}

TEST_CASE("at_line addresses the configured phase-encode axis") {
  KSpaceGrid g(1, 8, 12);
  g.at(0, 3, 5) = cplx(2.5, -1.0);
  CHECK(g.at_line(0, 5, 3) == cplx(2.5, -1.0));  // line axis = cols
  g.set_line_axis(LineAxis::kRows);
  CHECK(g.n_lines() == 8);
  CHECK(g.at_line(0, 3, 5) == cplx(2.5, -1.0));
}

TEST_CASE("centered delta transforms to a flat spectrum") {
  // A unit impulse at the image center must give a constant spectrum of
  // 1/sqrt(rows*cols) everywhere, with zero imaginary part.
  for (auto [rows, cols] : {std::pair{16, 16}, std::pair{16, 12}, std::pair{9, 11}}) {
    CoilImageStack s(1, rows, cols);
    s.at(0, rows / 2, cols / 2) = cplx(1.0, 0.0);
    KSpaceGrid k = fft2(s);
    const double expect = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
    for (const cplx& z : k.data()) {
      CHECK(z.real() == doctest::Approx(expect).epsilon(0).scale(1).epsilon(1e-12));
      CHECK(std::abs(z.imag()) < 1e-12);
    }
  }
}

TEST_CASE("constant image transforms to a centered delta") {
  const int rows = 12, cols = 16;
  CoilImageStack s(1, rows, cols);
  for (cplx& z : s.data()) z = cplx(0.75, 0.0);
  KSpaceGrid k = fft2(s);
  const double expect = 0.75 * std::sqrt(static_cast<double>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const cplx z = k.at(0, r, c);
      if (r == rows / 2 && c == cols / 2)
        CHECK(std::abs(z - cplx(expect, 0.0)) < 1e-12);
      else
        CHECK(std::abs(z) < 1e-12);
    }
}

TEST_CASE("fft2/ifft2 round trip within 1e-6") {
  for (auto [rows, cols] : {std::pair{16, 16}, std::pair{24, 18}, std::pair{15, 9}}) {
    CoilImageStack s = random_stack(3, rows, cols, 101);
    CoilImageStack back = ifft2(fft2(s));
    CHECK(max_abs_diff(s.data(), back.data()) < 1e-6);
    KSpaceGrid k = fft2(random_stack(2, rows, cols, 55));
    KSpaceGrid back_k = fft2(ifft2(k));
    CHECK(max_abs_diff(k.data(), back_k.data()) < 1e-6);
  }
}

TEST_CASE("orthonormal scaling preserves energy") {
  CoilImageStack s = random_stack(4, 20, 14, 7);
  KSpaceGrid k = fft2(s);
  CHECK(norm2(k) == doctest::Approx(norm2(s)).epsilon(1e-12));
  CoilImageStack back = ifft2(k);
  CHECK(norm2(back) == doctest::Approx(norm2(s)).epsilon(1e-12));
}

TEST_CASE("fft2 is linear") {
  CoilImageStack a = random_stack(2, 16, 12, 1);
  CoilImageStack b = random_stack(2, 16, 12, 2);
  const cplx alpha(0.7, -1.3), beta(-2.1, 0.4);
  CoilImageStack mix(2, 16, 12);
  for (size_t i = 0; i < mix.size(); ++i) mix.data()[i] = alpha * a.data()[i] + beta * b.data()[i];
  KSpaceGrid ka = fft2(a), kb = fft2(b), kmix = fft2(mix);
  double m = 0.0;
  for (size_t i = 0; i < kmix.size(); ++i)
    m = std::max(m, std::abs(kmix.data()[i] - (alpha * ka.data()[i] + beta * kb.data()[i])));
  CHECK(m < 1e-12);
}

TEST_CASE("repeated transforms are bit-identical") {
  CoilImageStack s = random_stack(2, 18, 22, 999);
  KSpaceGrid k1 = fft2(s);
  KSpaceGrid k2 = fft2(s);
  for (size_t i = 0; i < k1.size(); ++i) {
    CHECK(k1.data()[i].real() == k2.data()[i].real());
    CHECK(k1.data()[i].imag() == k2.data()[i].imag());
  }
}

TEST_CASE("non-finite input is rejected") {
  CoilImageStack s(1, 8, 8);
  s.at(0, 2, 2) = cplx(std::nan(""), 0.0);
  CHECK_THROWS_AS(fft2(s), ValidationError);
  KSpaceGrid k(1, 8, 8);
  k.at(0, 0, 0) = cplx(0.0, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(ifft2(k), ValidationError);
}

TEST_CASE("rss of 3+4i single pixel gives 5") {
  CoilImageStack s(2, 8, 8);
  s.at(0, 3, 3) = cplx(3.0, 0.0);
  s.at(1, 3, 3) = cplx(0.0, 4.0);
  RealImage im = rss_combine(s);
  CHECK(im.at(3, 3) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(im.at(0, 0) == 0.0);
}

TEST_CASE("rss is invariant under a unitary coil mixing") {
  // Mixing two coils by a rotation [[cos,-sin],[sin,cos]] must leave the
  // combined magnitude unchanged.
  CoilImageStack s = random_stack(2, 12, 10, 31);
  const double th = 0.6154;
  CoilImageStack mixed(2, 12, 10);
  const size_t plane = 12 * 10;
  for (size_t i = 0; i < plane; ++i) {
    const cplx a = s.data()[i], b = s.data()[plane + i];
    mixed.data()[i] = std::cos(th) * a - std::sin(th) * b;
    mixed.data()[plane + i] = std::sin(th) * a + std::cos(th) * b;
  }
  RealImage r0 = rss_combine(s), r1 = rss_combine(mixed);
  for (size_t i = 0; i < r0.size(); ++i)
    CHECK(r0.data()[i] == doctest::Approx(r1.data()[i]).epsilon(1e-12));
}

TEST_CASE("adding a coil never decreases rss") {
  CoilImageStack two = random_stack(2, 10, 10, 77);
  CoilImageStack three(3, 10, 10);
  std::copy(two.data().begin(), two.data().end(), three.data().begin());
  Rng rng(78);
  const size_t plane = 100;
  for (size_t i = 0; i < plane; ++i)
    three.data()[2 * plane + i] = cplx(rng.next_normal(), rng.next_normal());
  RealImage r2 = rss_combine(two), r3 = rss_combine(three);
  for (size_t i = 0; i < plane; ++i) CHECK(r3.data()[i] >= r2.data()[i] - 1e-15);
}
