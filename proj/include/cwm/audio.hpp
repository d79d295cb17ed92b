#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "cwm/error.hpp"

namespace cwm {

/// Mono waveform plus its sample rate. Samples are nominally in [-1, 1].
class AudioClip {
 public:
  AudioClip() = default;

  AudioClip(std::vector<double> samples, int sample_rate)
      : samples_(std::move(samples)), sample_rate_(sample_rate) {
    require(sample_rate_ > 0, ErrorCode::kInvalidArgument, "sample_rate must be positive");
    for (double s : samples_)
      require(std::isfinite(s), ErrorCode::kInvalidArgument, "non-finite sample");
  }

  std::span<const double> samples() const noexcept { return samples_; }
  std::vector<double>& mutable_samples() noexcept { return samples_; }
  int sample_rate() const noexcept { return sample_rate_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  double operator[](std::size_t i) const { return samples_[i]; }
  double duration() const { return static_cast<double>(samples_.size()) / sample_rate_; }

  friend bool operator==(const AudioClip&, const AudioClip&) = default;

 private:
  std::vector<double> samples_;
  int sample_rate_ = 16000;
};

inline double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double rms(const AudioClip& clip) { return rms(clip.samples()); }

}  // namespace cwm
