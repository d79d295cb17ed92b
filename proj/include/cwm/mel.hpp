#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "cwm/audio.hpp"
#include "cwm/matrix.hpp"
#include "cwm/stft.hpp"

namespace cwm {

inline constexpr double kLogFloor = 1e-9;

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters, one row per filter, one column per FFT bin.
struct MelFilterbank {
  Matrix<double> weights;
  std::vector<double> centers_hz;
  double f_min = 0.0;
  double f_max = 0.0;
};

/// Fills row `r` of `w` with a triangle over (left, right) peaking at
/// `center`. A triangle narrower than the bin spacing would be all zero, in
/// which case the bin nearest the center gets weight 1.
inline void fill_triangle(Matrix<double>& w, std::size_t r, double left, double center, double right,
                          double bin_hz) {
  double sum = 0.0;
  for (std::size_t k = 0; k < w.cols(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    double v = 0.0;
    if (f > left && f <= center && center > left) v = (f - left) / (center - left);
    else if (f > center && f < right && right > center) v = (right - f) / (right - center);
    w(r, k) = v;
    sum += v;
  }
  if (sum <= 0.0) {
    auto k = static_cast<std::size_t>(std::lround(center / bin_hz));
    w(r, std::min(k, w.cols() - 1)) = 1.0;
  }
}

inline MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t fft_size, int sample_rate, double f_min,
                                    double f_max) {
  require(n_mels >= 1, ErrorCode::kInvalidArgument, "n_mels must be >= 1");
  require(0.0 <= f_min && f_min < f_max && f_max <= sample_rate / 2.0, ErrorCode::kInvalidArgument,
          "mel filterbank needs 0 <= f_min < f_max <= sample_rate / 2");
  MelFilterbank fb{Matrix<double>(n_mels, fft_size / 2 + 1), {}, f_min, f_max};
  const double m_lo = hz_to_mel(f_min), m_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  edges.front() = f_min;
  edges.back() = f_max;
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  for (std::size_t m = 0; m < n_mels; ++m) {
    fb.centers_hz.push_back(edges[m + 1]);
    fill_triangle(fb.weights, m, edges[m], edges[m + 1], edges[m + 2], bin_hz);
  }
  return fb;
}

/// rows(spec) x rows(fb): each frame projected through the filterbank.
inline Matrix<double> project(const Matrix<double>& spec, const Matrix<double>& fb) {
  require(spec.cols() == fb.cols(), ErrorCode::kShapeMismatch, "filterbank width != spectrum bins");
  Matrix<double> out(spec.rows(), fb.rows());
  for (std::size_t t = 0; t < spec.rows(); ++t) {
    auto frame = spec.row(t);
    for (std::size_t m = 0; m < fb.rows(); ++m) {
      auto w = fb.row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * frame[k];
      out(t, m) = acc;
    }
  }
  return out;
}

/// log(max(M |STFT(x)|, 1e-9)), T x n_mels.
inline Matrix<double> log_mel(const AudioClip& clip, const MelFilterbank& fb, const StftGeometry& g) {
  auto mel = project(magnitude(stft(clip, g)).frames, fb.weights);
  for (double& v : mel.data()) v = std::log(std::max(v, kLogFloor));
  return mel;
}

}  // namespace cwm
