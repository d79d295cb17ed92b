#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "cwm/audio.hpp"
#include "cwm/error.hpp"
#include "cwm/fft.hpp"
#include "cwm/matrix.hpp"

namespace cwm {

struct StftGeometry {
  std::size_t frame_len = 1024;
  std::size_t hop = 512;
  std::size_t fft_size = 1024;

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }

  /// Frames produced for n samples; no padding, the trailing partial frame is dropped.
  std::size_t frame_count(std::size_t n) const noexcept {
    return n < frame_len ? 0 : 1 + (n - frame_len) / hop;
  }

  void validate() const {
    require(frame_len > 0 && hop > 0, ErrorCode::kInvalidGeometry, "frame_len and hop must be positive");
    require(frame_len <= fft_size, ErrorCode::kInvalidGeometry, "frame_len exceeds fft_size");
    require(hop <= frame_len, ErrorCode::kInvalidGeometry, "hop exceeds frame_len");
  }

  friend bool operator==(const StftGeometry&, const StftGeometry&) = default;
};

struct ComplexSpectrogram {
  Matrix<std::complex<double>> frames;  // T x K
  StftGeometry geometry;
  int sample_rate = 0;
};

struct MagnitudeSpectrogram {
  Matrix<double> frames;  // T x K, non-negative
  StftGeometry geometry;
  int sample_rate = 0;
};

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline ComplexSpectrogram stft(std::span<const double> x, int sample_rate, const StftGeometry& g) {
  g.validate();
  const std::size_t frames = g.frame_count(x.size());
  ComplexSpectrogram out{Matrix<std::complex<double>>(frames, g.bins()), g, sample_rate};
  if (frames == 0) return out;
  const auto window = hann_window(g.frame_len);
  RealFft fft(g.fft_size);
  std::vector<double> buf(g.fft_size, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = x.data() + t * g.hop;
    for (std::size_t i = 0; i < g.frame_len; ++i) buf[i] = src[i] * window[i];
    fft.forward(buf, out.frames.row(t));
  }
  return out;
}

inline ComplexSpectrogram stft(const AudioClip& clip, const StftGeometry& g) {
  return stft(clip.samples(), clip.sample_rate(), g);
}

/// True when Hann analysis/synthesis with this hop is constant-overlap-add.
inline bool is_cola(const StftGeometry& g) {
  return g.hop > 0 && g.frame_len % g.hop == 0 && g.frame_len / g.hop >= 2;
}

/// Weighted overlap-add with the analysis window reused for synthesis and
/// normalization by the summed squared window (floored at 1e-8).
inline AudioClip istft(const ComplexSpectrogram& spec) {
  const auto& g = spec.geometry;
  g.validate();
  require(is_cola(g), ErrorCode::kInvalidGeometry, "istft requires hop = frame_len / k, k >= 2");
  const std::size_t frames = spec.frames.rows();
  if (frames == 0) return AudioClip({}, spec.sample_rate);
  const std::size_t n = (frames - 1) * g.hop + g.frame_len;
  const auto window = hann_window(g.frame_len);
  std::vector<double> num(n, 0.0), den(n, 0.0), buf(g.fft_size);
  RealFft fft(g.fft_size);
  const double scale = 1.0 / static_cast<double>(g.fft_size);
  for (std::size_t t = 0; t < frames; ++t) {
    fft.inverse(spec.frames.row(t), buf);
    const std::size_t off = t * g.hop;
    for (std::size_t i = 0; i < g.frame_len; ++i) {
      num[off + i] += window[i] * buf[i] * scale;
      den[off + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) num[i] /= std::max(den[i], 1e-8);
  return AudioClip(std::move(num), spec.sample_rate);
}

inline MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram out{Matrix<double>(spec.frames.rows(), spec.frames.cols()), spec.geometry,
                           spec.sample_rate};
  auto& dst = out.frames.data();
  const auto& src = spec.frames.data();
  std::transform(src.begin(), src.end(), dst.begin(), [](const std::complex<double>& c) { return std::sqrt(std::norm(c)); });
  return out;
}

}  // namespace cwm
