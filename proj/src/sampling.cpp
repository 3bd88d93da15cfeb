#include "rtrecon/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "rtrecon/errors.hpp"
#include "rtrecon/rng.hpp"

namespace rtrecon {

namespace {

// Peripheral rates proximal to distal, as exact rationals of n_lines.
constexpr int64_t kSectionRateNum[4] = {40, 20, 10, 5};
constexpr int64_t kSectionRateDen = 1000;
constexpr int64_t kCenterRateNum = 10;
constexpr int64_t kCenterRateDen = 100;
constexpr int64_t kConventionalRateNum = 1667;
constexpr int64_t kConventionalRateDen = 10000;

// First-k selection of a Fisher-Yates shuffle over [begin, end); the chosen
// indices are marked acquired. One next_below draw per selected line.
void draw_without_replacement(std::vector<int>& pool, int count, Rng& rng,
                              std::vector<uint8_t>& lines) {
  const int m = static_cast<int>(pool.size());
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<uint64_t>(m - i)));
    std::swap(pool[i], pool[j]);
    lines[pool[i]] = 1;
  }
}

std::vector<int> range_indices(std::pair<int, int> r) {
  std::vector<int> v(r.second - r.first);
  std::iota(v.begin(), v.end(), r.first);
  return v;
}

}  // namespace

std::string to_string(MaskProfile p) {
  return p == MaskProfile::kNonuniform8421 ? "nonuniform_8421" : "conventional_uniform";
}

MaskProfile mask_profile_from_string(const std::string& s) {
  if (s == "nonuniform_8421") return MaskProfile::kNonuniform8421;
  if (s == "conventional_uniform") return MaskProfile::kConventionalUniform;
  throw ValidationError("unknown mask profile '" + s + "'");
}

int SamplingMask::acquired_count() const {
  int n = 0;
  for (uint8_t v : lines) n += v != 0;
  return n;
}

std::vector<int> SamplingMask::acquired_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n_lines; ++i)
    if (lines[i]) idx.push_back(i);
  return idx;
}

int64_t round_half_up_ratio(int64_t num, int64_t den) { return (2 * num + den) / (2 * den); }

MaskLayout compute_mask_layout(int n_lines) {
  MaskLayout layout;
  const int c = static_cast<int>(round_half_up_ratio(kCenterRateNum * n_lines, kCenterRateDen));
  layout.center_count = c;
  layout.center_begin = (n_lines - c) / 2;

  const int left_len = layout.center_begin;
  const int right_len = n_lines - c - left_len;  // gets the extra line when n - c is odd

  // Section lengths proximal first; remainder goes to proximal-most sections.
  auto section_lengths = [](int half_len) {
    std::array<int, 4> len{};
    const int base = half_len / 4, rem = half_len % 4;
    for (int s = 0; s < 4; ++s) len[s] = base + (s < rem ? 1 : 0);
    return len;
  };

  // Left half spans [0, left_len); its proximal end touches the center, so
  // section 0 sits at the high-index end.
  auto llen = section_lengths(left_len);
  int hi = left_len;
  for (int s = 0; s < 4; ++s) {
    layout.left[s] = {hi - llen[s], hi};
    hi -= llen[s];
  }
  // Right half spans [center_begin + c, n); proximal end is the low end.
  auto rlen = section_lengths(right_len);
  int lo = layout.center_begin + c;
  for (int s = 0; s < 4; ++s) {
    layout.right[s] = {lo, lo + rlen[s]};
    lo += rlen[s];
  }
  return layout;
}

SamplingMask make_mask(int n_lines, uint64_t seed) {
  if (n_lines < 40)
    throw ValidationError("nonuniform mask needs n_lines >= 40, got " + std::to_string(n_lines));

  const MaskLayout layout = compute_mask_layout(n_lines);
  SamplingMask mask;
  mask.lines.assign(n_lines, 0);
  mask.n_lines = n_lines;
  mask.seed = seed;
  mask.profile = MaskProfile::kNonuniform8421;

  for (int i = 0; i < layout.center_count; ++i) mask.lines[layout.center_begin + i] = 1;

  std::array<int, 4> counts{};
  for (int s = 0; s < 4; ++s)
    counts[s] =
        static_cast<int>(round_half_up_ratio(kSectionRateNum[s] * n_lines, kSectionRateDen));

  Rng rng(seed);
  for (const auto* side : {&layout.left, &layout.right}) {
    for (int s = 0; s < 4; ++s) {
      auto pool = range_indices((*side)[s]);
      if (static_cast<int>(pool.size()) < counts[s])
        throw ValidationError("mask section " + std::to_string(s) + " holds " +
                              std::to_string(pool.size()) + " lines but needs " +
                              std::to_string(counts[s]) + "; increase n_lines");
      draw_without_replacement(pool, counts[s], rng, mask.lines);
    }
  }
  return mask;
}

SamplingMask make_conventional_mask(int n_lines, uint64_t seed) {
  if (n_lines < 20)
    throw ValidationError("conventional mask needs n_lines >= 20, got " + std::to_string(n_lines));

  const int c = static_cast<int>(round_half_up_ratio(kCenterRateNum * n_lines, kCenterRateDen));
  const int begin = (n_lines - c) / 2;
  const int peripheral =
      static_cast<int>(round_half_up_ratio(kConventionalRateNum * (n_lines - c),
                                           kConventionalRateDen));

  SamplingMask mask;
  mask.lines.assign(n_lines, 0);
  mask.n_lines = n_lines;
  mask.seed = seed;
  mask.profile = MaskProfile::kConventionalUniform;
  for (int i = 0; i < c; ++i) mask.lines[begin + i] = 1;

  std::vector<int> pool;
  for (int i = 0; i < n_lines; ++i)
    if (!mask.lines[i]) pool.push_back(i);
  if (static_cast<int>(pool.size()) < peripheral)
    throw ValidationError("conventional mask periphery holds " + std::to_string(pool.size()) +
                          " lines but needs " + std::to_string(peripheral));
  Rng rng(seed);
  draw_without_replacement(pool, peripheral, rng, mask.lines);
  return mask;
}

KSpaceGrid apply_mask(const KSpaceGrid& kspace, const SamplingMask& mask) {
  if (mask.n_lines != kspace.n_lines())
    throw ValidationError("mask length " + std::to_string(mask.n_lines) +
                          " does not match k-space line extent " +
                          std::to_string(kspace.n_lines()));
  KSpaceGrid out = kspace;
  for (int coil = 0; coil < out.n_coils(); ++coil)
    for (int line = 0; line < out.n_lines(); ++line) {
      if (mask.lines[line]) continue;
      for (int read = 0; read < out.n_read(); ++read) out.at_line(coil, line, read) = cplx(0, 0);
    }
  return out;
}

MaskStats mask_stats(const SamplingMask& mask) {
  if (mask.n_lines <= 0 || static_cast<int>(mask.lines.size()) != mask.n_lines)
    throw ValidationError("mask_stats: inconsistent mask");
  MaskStats st;
  st.acquired_count = mask.acquired_count();
  if (st.acquired_count == 0) throw ValidationError("mask_stats: empty mask");
  st.acceleration = static_cast<double>(mask.n_lines) / st.acquired_count;

  const MaskLayout layout = compute_mask_layout(mask.n_lines);
  st.center_count = layout.center_count;
  for (int i = 0; i < layout.center_count; ++i)
    st.center_acquired += mask.lines[layout.center_begin + i] != 0;
  for (int s = 0; s < 4; ++s) {
    for (int i = layout.left[s].first; i < layout.left[s].second; ++i)
      st.left_sections[s] += mask.lines[i] != 0;
    for (int i = layout.right[s].first; i < layout.right[s].second; ++i)
      st.right_sections[s] += mask.lines[i] != 0;
  }
  return st;
}

}  // namespace rtrecon
