#pragma once

// Differentiable versions of the log-mel and LFCC front ends. The fixed
// projections are built once and shared across calls.

#include <cstddef>

#include "cwm/autograd/layers.hpp"
#include "cwm/lfcc.hpp"
#include "cwm/mel.hpp"

namespace cwm::ag {

class LogMel {
 public:
  LogMel(const StftGeometry& g, std::size_t n_mels, int sample_rate, double f_min, double f_max)
      : geometry_(g), fb_(share(to_sparse(mel_filterbank(n_mels, g.fft_size, sample_rate, f_min, f_max).weights))) {}

  const StftGeometry& geometry() const noexcept { return geometry_; }
  std::size_t n_mels() const noexcept { return fb_->out_size(); }

  /// [N] -> [T, n_mels], log(max(M |STFT|, 1e-9))
  Tensor operator()(const Tensor& x) const {
    return log_floor(map_last(stft_magnitude(x, geometry_), fb_), kLogFloor);
  }

 private:
  StftGeometry geometry_;
  MapPtr fb_;
};

class Lfcc {
 public:
  Lfcc(const LfccConfig& cfg, int sample_rate) : cfg_(cfg), geometry_(cfg.geometry(sample_rate)) {
    cfg.validate(sample_rate);
    fb_ = share(to_sparse(linear_filterbank(cfg.n_filters, cfg.fft_size, sample_rate,
                                            cfg.f_max_fraction * sample_rate)));
    dct_ = share(to_sparse(dct2_matrix(cfg.n_ceps, cfg.n_filters)));
  }

  std::size_t dimension() const noexcept { return cfg_.dimension(); }
  std::size_t frames(std::size_t n) const noexcept { return geometry_.frame_count(n); }

  /// [N] -> [T, D]
  Tensor operator()(const Tensor& x) const {
    auto energies = log_floor(map_last(stft_power(x, geometry_), fb_), kLogFloor);
    auto statics = map_last(energies, dct_);
    if (!cfg_.include_deltas) return statics;
    auto dm = share(delta_map(statics.dim(0), cfg_.delta_width));
    auto d1 = map_first(statics, dm);
    auto d2 = map_first(d1, dm);
    return concat_last({statics, d1, d2});
  }

 private:
  LfccConfig cfg_;
  StftGeometry geometry_;
  MapPtr fb_;
  MapPtr dct_;
};

}  // namespace cwm::ag
