#pragma once

// Linear-frequency cepstral coefficients with regression deltas, in the
// configuration used by the ASVspoof LFCC baseline front-end.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <vector>

#include "cwm/audio.hpp"
#include "cwm/linear_map.hpp"
#include "cwm/matrix.hpp"
#include "cwm/mel.hpp"
#include "cwm/stft.hpp"

namespace cwm {

struct LfccConfig {
  double frame_ms = 20.0;
  double hop_ms = 10.0;
  std::size_t fft_size = 1024;
  std::size_t n_filters = 20;
  std::size_t n_ceps = 20;
  bool include_deltas = true;
  std::size_t delta_width = 2;
  // Highest filter edge as a fraction of the sample rate. 0.25 puts it at
  // half the Nyquist frequency.
  double f_max_fraction = 0.25;

  std::size_t dimension() const noexcept { return include_deltas ? 3 * n_ceps : n_ceps; }

  StftGeometry geometry(int sample_rate) const {
    StftGeometry g;
    g.frame_len = static_cast<std::size_t>(std::lround(sample_rate * frame_ms / 1000.0));
    g.hop = static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0));
    g.fft_size = fft_size;
    return g;
  }

  void validate(int sample_rate) const {
    require(n_ceps >= 1 && n_ceps <= n_filters, ErrorCode::kInvalidArgument, "need 1 <= n_ceps <= n_filters");
    require(f_max_fraction > 0.0 && f_max_fraction <= 0.5, ErrorCode::kInvalidArgument,
            "f_max_fraction must be in (0, 0.5]");
    geometry(sample_rate).validate();
  }
};

struct FeatureMatrix {
  Matrix<double> values;  // frames x dimension
  double frame_seconds = 0.0;
  double hop_seconds = 0.0;

  std::size_t frames() const noexcept { return values.rows(); }
  std::size_t dimension() const noexcept { return values.cols(); }
};

/// Triangular filters with centers evenly spaced on linear frequency between
/// 0 and f_max (exclusive at both ends).
inline Matrix<double> linear_filterbank(std::size_t n_filters, std::size_t fft_size, int sample_rate,
                                        double f_max) {
  require(n_filters >= 1, ErrorCode::kInvalidArgument, "n_filters must be >= 1");
  require(f_max > 0.0 && f_max <= sample_rate / 2.0, ErrorCode::kInvalidArgument,
          "f_max must be in (0, sample_rate / 2]");
  Matrix<double> w(n_filters, fft_size / 2 + 1);
  const double spacing = f_max / static_cast<double>(n_filters + 1);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  for (std::size_t i = 0; i < n_filters; ++i) {
    const double c = spacing * static_cast<double>(i + 1);
    fill_triangle(w, i, c - spacing, c, c + spacing, bin_hz);
  }
  return w;
}

/// Orthonormal DCT-II basis truncated to the first n_out coefficients.
inline Matrix<double> dct2_matrix(std::size_t n_out, std::size_t n_in) {
  Matrix<double> d(n_out, n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n_in));
    for (std::size_t n = 0; n < n_in; ++n)
      d(k, n) = s * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(n) + 1.0) /
                             (2.0 * static_cast<double>(n_in)));
  }
  return d;
}

/// Regression delta over time as a frames x frames linear map, edges replicated.
inline SparseLinearMap delta_map(std::size_t frames, std::size_t width) {
  SparseLinearMap map(frames, frames);
  if (frames == 0) return map;
  double norm = 0.0;
  for (std::size_t k = 1; k <= width; ++k) norm += 2.0 * static_cast<double>(k * k);
  const auto last = static_cast<std::ptrdiff_t>(frames) - 1;
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> acc(frames, 0.0);
    for (std::size_t k = 1; k <= width; ++k) {
      const auto tp = std::clamp(static_cast<std::ptrdiff_t>(t + k), std::ptrdiff_t{0}, last);
      const auto tm = std::clamp(static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(k),
                                 std::ptrdiff_t{0}, last);
      acc[static_cast<std::size_t>(tp)] += static_cast<double>(k) / norm;
      acc[static_cast<std::size_t>(tm)] -= static_cast<double>(k) / norm;
    }
    for (std::size_t j = 0; j < frames; ++j)
      if (acc[j] != 0.0) map.row(t).push_back({j, acc[j]});
  }
  return map;
}

/// Same values as delta_map, but each term is formed as a difference of two
/// frames first, so time-constant input gives exactly zero.
inline FeatureMatrix deltas(const FeatureMatrix& feat, std::size_t width = 2) {
  const std::size_t frames = feat.frames(), dim = feat.dimension();
  FeatureMatrix out{Matrix<double>(frames, dim), feat.frame_seconds, feat.hop_seconds};
  if (frames == 0) return out;
  double norm = 0.0;
  for (std::size_t k = 1; k <= width; ++k) norm += 2.0 * static_cast<double>(k * k);
  const auto last = static_cast<std::ptrdiff_t>(frames) - 1;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < dim; ++d) {
      double acc = 0.0;
      for (std::size_t k = 1; k <= width; ++k) {
        const auto tp = std::min(static_cast<std::ptrdiff_t>(t + k), last);
        const auto tm = std::max(static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(k), std::ptrdiff_t{0});
        acc += static_cast<double>(k) *
               (feat.values(static_cast<std::size_t>(tp), d) - feat.values(static_cast<std::size_t>(tm), d));
      }
      out.values(t, d) = acc / norm;
    }
  }
  return out;
}

inline FeatureMatrix lfcc(const AudioClip& clip, const LfccConfig& cfg = {}) {
  cfg.validate(clip.sample_rate());
  const auto g = cfg.geometry(clip.sample_rate());
  const FeatureMatrix empty{Matrix<double>(0, cfg.dimension()), cfg.frame_ms / 1000.0, cfg.hop_ms / 1000.0};
  if (g.frame_count(clip.size()) == 0) return empty;

  auto power = magnitude(stft(clip, g)).frames;
  for (double& v : power.data()) v *= v;
  const auto fb = linear_filterbank(cfg.n_filters, cfg.fft_size, clip.sample_rate(),
                                    cfg.f_max_fraction * clip.sample_rate());
  auto energies = project(power, fb);
  for (double& v : energies.data()) v = std::log(std::max(v, kLogFloor));
  const auto statics = project(energies, dct2_matrix(cfg.n_ceps, cfg.n_filters));

  FeatureMatrix base{statics, empty.frame_seconds, empty.hop_seconds};
  if (!cfg.include_deltas) return base;
  const auto d1 = deltas(base, cfg.delta_width);
  const auto d2 = deltas(d1, cfg.delta_width);
  FeatureMatrix out{Matrix<double>(base.frames(), 3 * cfg.n_ceps), base.frame_seconds, base.hop_seconds};
  for (std::size_t t = 0; t < base.frames(); ++t)
    for (std::size_t c = 0; c < cfg.n_ceps; ++c) {
      out.values(t, c) = base.values(t, c);
      out.values(t, cfg.n_ceps + c) = d1.values(t, c);
      out.values(t, 2 * cfg.n_ceps + c) = d2.values(t, c);
    }
  return out;
}

/// One frame per row, comma separated, full precision.
inline void write_csv(std::ostream& os, const FeatureMatrix& feat) {
  const auto old = os.precision(17);
  for (std::size_t t = 0; t < feat.frames(); ++t) {
    for (std::size_t d = 0; d < feat.dimension(); ++d) os << (d ? "," : "") << feat.values(t, d);
    os << '\n';
  }
  os.precision(old);
}

}  // namespace cwm
