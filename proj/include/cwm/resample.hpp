#pragma once

// Six-tap Hann-windowed sinc interpolation between two sample rates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

#include "cwm/audio.hpp"
#include "cwm/linear_map.hpp"

namespace cwm {

struct SincKernel {
  static constexpr int kTaps = 6;
  int source_rate = 0;
  int target_rate = 0;
  double cutoff_hz = 0.0;  // 0.9 x Nyquist of the lower rate

  SincKernel(int source, int target) : source_rate(source), target_rate(target) {
    require(source > 0 && target > 0, ErrorCode::kInvalidArgument, "sample rates must be positive");
    cutoff_hz = 0.9 * std::min(source, target) / 2.0;
  }

  /// Un-normalized weight of an input sample `offset` input samples away from
  /// the interpolation point.
  double weight(double offset) const {
    constexpr double half = kTaps / 2.0;
    if (std::abs(offset) >= half) return 0.0;
    const double fc = cutoff_hz / source_rate;  // cycles per input sample
    const double arg = 2.0 * fc * offset;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * offset / half);
    return 2.0 * fc * sinc * window;
  }
};

inline std::size_t resampled_length(std::size_t n, int source_rate, int target_rate) {
  const auto num = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(target_rate);
  const auto src = static_cast<std::uint64_t>(source_rate);
  return static_cast<std::size_t>((2 * num + src) / (2 * src));
}

/// Resampling of an n-sample signal as an explicit sparse matrix. Each row
/// holds the in-range taps around position out_index * source / target,
/// renormalized to unit sum so DC passes unchanged, including at the edges
/// where taps would fall outside the signal.
inline SparseLinearMap resample_map(std::size_t n, int source_rate, int target_rate) {
  if (source_rate == target_rate) return SparseLinearMap::identity(n);
  const SincKernel kernel(source_rate, target_rate);
  const std::size_t m = resampled_length(n, source_rate, target_rate);
  SparseLinearMap map(n, m);
  const double step = static_cast<double>(source_rate) / target_rate;
  for (std::size_t o = 0; o < m; ++o) {
    const double pos = static_cast<double>(o) * step;
    const auto base = static_cast<std::int64_t>(std::floor(pos));
    auto& row = map.row(o);
    double total = 0.0;
    for (std::int64_t i = base - SincKernel::kTaps / 2 + 1; i <= base + SincKernel::kTaps / 2; ++i) {
      if (i < 0 || i >= static_cast<std::int64_t>(n)) continue;
      const double w = kernel.weight(static_cast<double>(i) - pos);
      if (w == 0.0) continue;
      row.push_back({static_cast<std::size_t>(i), w});
      total += w;
    }
    if (total != 0.0)
      for (auto& t : row) t.weight /= total;
  }
  return map;
}

inline AudioClip resample(const AudioClip& clip, int target_rate) {
  require(target_rate > 0, ErrorCode::kInvalidArgument, "target_rate must be positive");
  if (clip.sample_rate() == target_rate) return clip;
  auto map = resample_map(clip.size(), clip.sample_rate(), target_rate);
  return AudioClip(map.apply(clip.samples()), target_rate);
}

}  // namespace cwm
