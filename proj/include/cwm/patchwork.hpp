#pragma once

// Spectral patchwork watermarking. Each STFT frame carries one payload bit:
// normalized magnitudes in key-selected bin set A are raised to the power
// 1 + d and those in set B to 1 - d (swapped for a zero bit). Detection
// compares the mean log magnitude of the two sets after removing each bin's
// average over the clip.

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwm/audio.hpp"
#include "cwm/augment.hpp"
#include "cwm/random.hpp"
#include "cwm/stft.hpp"

namespace cwm {

inline constexpr std::size_t kPayloadBits = 128;

/// 128-bit message. Hex form is 32 digits, most significant bit first.
class Payload {
 public:
  Payload() = default;
  explicit Payload(const std::array<std::uint8_t, kPayloadBits>& bits) : bits_(bits) {
    for (auto b : bits_) require(b <= 1, ErrorCode::kInvalidArgument, "payload bits must be 0 or 1");
  }

  static Payload from_hex(std::string_view hex) {
    require(hex.size() == kPayloadBits / 4, ErrorCode::kParse, "payload must be 32 hex digits");
    Payload p;
    for (std::size_t i = 0; i < hex.size(); ++i) {
      const char c = hex[i];
      int v = -1;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
      require(v >= 0, ErrorCode::kParse, std::string("invalid hex digit '") + c + "'");
      for (int b = 0; b < 4; ++b) p.bits_[4 * i + b] = static_cast<std::uint8_t>((v >> (3 - b)) & 1);
    }
    return p;
  }

  static Payload random(std::uint64_t seed) {
    Rng rng(seed);
    Payload p;
    for (auto& b : p.bits_) b = static_cast<std::uint8_t>(rng() >> 63);
    return p;
  }

  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    for (std::size_t i = 0; i < kPayloadBits; i += 4)
      s.push_back(kDigits[(bits_[i] << 3) | (bits_[i + 1] << 2) | (bits_[i + 2] << 1) | bits_[i + 3]]);
    return s;
  }

  int operator[](std::size_t i) const { return bits_[i]; }
  std::size_t size() const noexcept { return kPayloadBits; }
  const std::array<std::uint8_t, kPayloadBits>& bits() const noexcept { return bits_; }

  friend bool operator==(const Payload&, const Payload&) = default;

 private:
  std::array<std::uint8_t, kPayloadBits> bits_{};
};

struct WatermarkKey {
  std::uint64_t seed = 0;
  double f_low = 500.0;
  double f_high = 7200.0;
  std::size_t frames_per_bit = 1;

  /// Default band of 500 Hz to 0.45 x sample_rate.
  static WatermarkKey with_default_band(std::uint64_t seed, int sample_rate) {
    return {seed, 500.0, 0.45 * sample_rate, 1};
  }

  void validate(int sample_rate) const {
    require(f_low < f_high && f_high <= sample_rate / 2.0, ErrorCode::kInvalidArgument,
            "key band must satisfy f_low < f_high <= Nyquist");
    require(frames_per_bit >= 1, ErrorCode::kInvalidArgument, "frames_per_bit must be >= 1");
  }
};

class StrengthGrid {
 public:
  StrengthGrid() : StrengthGrid(0.01, 0.2, 0.01) {}

  StrengthGrid(double min, double max, double step) {
    require(step > 0 && min > 0 && max < 1 && min <= max, ErrorCode::kInvalidArgument,
            "strength grid needs 0 < min <= max < 1 and step > 0");
    const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) values_.push_back(min + step * static_cast<double>(i));
  }

  explicit StrengthGrid(std::vector<double> values) : values_(std::move(values)) {
    require(!values_.empty(), ErrorCode::kInvalidArgument, "empty strength grid");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      require(values_[i] > 0 && values_[i] < 1, ErrorCode::kInvalidArgument, "strength outside (0, 1)");
      require(i == 0 || values_[i] > values_[i - 1], ErrorCode::kInvalidArgument, "strength grid not ascending");
    }
  }

  const std::vector<double>& values() const noexcept { return values_; }
  double max() const { return values_.back(); }

 private:
  std::vector<double> values_;
};

enum class Statistic { kLogMean, kRawMean };

struct PatchworkConfig {
  StftGeometry geometry{1024, 512, 1024};
  double reference_fraction = 1e-4;  // s_ref relative to the peak magnitude outside the keyed bins
  Statistic statistic = Statistic::kLogMean;
  // XOR the payload with a key-derived bit mask before embedding, so every
  // payload puts a balanced bit pattern on the frames
  bool whiten = true;
  // subtract each bin's mean statistic over the clip before comparing sets;
  // removes the stationary A/B imbalance of the host spectrum
  bool center_bins = true;
};

/// Playback-speed compensation for detection: the clip is re-stretched by
/// each candidate and the candidate with the strongest margins wins.
struct SpeedSearch {
  bool enabled = false;
  double min_factor = 0.9;
  double max_factor = 1.1;
  double coarse_step = 0.01;
  double fine_step = 0.001;
};

struct BinSets {
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;
};

struct DetectionResult {
  bool valid = false;
  std::vector<std::uint8_t> decoded_bits;
  std::vector<double> per_bit_margin;
  std::optional<double> score;  // present when a reference payload was given
  bool hard_decision = false;
  double confidence = 0.0;  // mean |margin|
  double speed = 1.0;       // stretch factor compensated for

  std::optional<Payload> decoded_payload() const {
    if (decoded_bits.size() != kPayloadBits) return std::nullopt;
    std::array<std::uint8_t, kPayloadBits> bits{};
    std::copy(decoded_bits.begin(), decoded_bits.end(), bits.begin());
    return Payload(bits);
  }

  std::size_t bit_errors(const Payload& reference) const {
    std::size_t errors = 0;
    for (std::size_t i = 0; i < kPayloadBits; ++i)
      if (i >= decoded_bits.size() || decoded_bits[i] != reference[i]) ++errors;
    return errors;
  }
};

inline BinSets derive_bin_sets(const WatermarkKey& key, std::size_t fft_size, int sample_rate) {
  key.validate(sample_rate);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  std::vector<std::size_t> band;
  for (std::size_t k = 0; k <= fft_size / 2; ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f >= key.f_low && f <= key.f_high) band.push_back(k);
  }
  require(band.size() >= 8, ErrorCode::kBandTooNarrow,
          "key band covers " + std::to_string(band.size()) + " bins, need >= 8");
  Rng rng(key.seed);
  shuffle(band, rng);
  const std::size_t half = band.size() / 2;
  BinSets sets{{band.begin(), band.begin() + half}, {band.begin() + half, band.begin() + 2 * half}};
  std::sort(sets.a.begin(), sets.a.end());
  std::sort(sets.b.begin(), sets.b.end());
  return sets;
}

/// Key-derived mask XORed onto the payload when whitening is enabled.
inline std::array<std::uint8_t, kPayloadBits> whitening_mask(const WatermarkKey& key) {
  Rng rng(mix_seed(key.seed, 0x7768697465));
  std::array<std::uint8_t, kPayloadBits> mask{};
  for (auto& b : mask) b = static_cast<std::uint8_t>(rng() >> 63);
  return mask;
}

/// Applies the power-law modulation to one magnitude frame in place.
/// `s_ref` maps magnitudes into the normalized domain u = max(s, s_ref) / s_ref.
inline void embed_bit(std::span<double> frame, const BinSets& sets, int bit, double d, double s_ref) {
  require(d >= 0.0 && d < 1.0, ErrorCode::kInvalidArgument, "strength must be in [0, 1)");
  if (s_ref <= 0.0) return;
  // s = u * s_ref becomes u^(1 +- d) * s_ref, i.e. s is scaled by u^(+-d)
  auto modulate = [&](const std::vector<std::size_t>& bins, double sign) {
    for (auto k : bins) {
      const double u = std::max(frame[k], s_ref) / s_ref;
      frame[k] *= std::pow(u, sign * d);
    }
  };
  modulate(sets.a, bit ? 1.0 : -1.0);
  modulate(sets.b, bit ? -1.0 : 1.0);
}

inline double peak_magnitude(const MagnitudeSpectrogram& mag) {
  double peak = 0.0;
  for (double v : mag.frames.data()) peak = std::max(peak, v);
  return peak;
}

/// Peak magnitude over the bins the key leaves untouched, so embedding does
/// not move the normalization the detector recomputes. Falls back to the
/// overall peak when those bins are silent.
inline double reference_peak(const MagnitudeSpectrogram& mag, const BinSets& sets) {
  std::vector<bool> keyed(mag.frames.cols(), false);
  for (auto k : sets.a) keyed[k] = true;
  for (auto k : sets.b) keyed[k] = true;
  double peak = 0.0;
  for (std::size_t t = 0; t < mag.frames.rows(); ++t) {
    auto row = mag.frames.row(t);
    for (std::size_t k = 0; k < row.size(); ++k)
      if (!keyed[k]) peak = std::max(peak, row[k]);
  }
  return peak > 0.0 ? peak : peak_magnitude(mag);
}

/// Set-mean difference for one frame in the normalized domain.
inline double frame_margin(std::span<const double> frame, const BinSets& sets, double s_ref, Statistic stat) {
  auto mean = [&](const std::vector<std::size_t>& bins) {
    double acc = 0.0;
    for (auto k : bins) {
      const double u = std::max(frame[k], s_ref) / s_ref;
      acc += stat == Statistic::kLogMean ? std::log(u) : u;
    }
    return acc / static_cast<double>(bins.size());
  };
  return mean(sets.a) - mean(sets.b);
}

/// Mean frame margin over a bit group; bit is 1 iff the margin is positive.
inline std::pair<int, double> detect_bit(std::span<const std::span<const double>> frames, const BinSets& sets,
                                         double s_ref, Statistic stat = Statistic::kLogMean) {
  require(!frames.empty(), ErrorCode::kInvalidArgument, "detect_bit needs at least one frame");
  double acc = 0.0;
  for (const auto& f : frames) acc += frame_margin(f, sets, s_ref, stat);
  const double margin = acc / static_cast<double>(frames.size());
  return {margin > 0.0 ? 1 : 0, margin};
}

namespace patchwork_detail {

/// Overlap-adds `spec` and fills the samples past the last full frame from
/// the original so the output keeps the input length.
inline AudioClip resynthesize(const AudioClip& original, const ComplexSpectrogram& spec) {
  auto body = istft(spec);
  std::vector<double> out(original.samples().begin(), original.samples().end());
  std::copy(body.samples().begin(), body.samples().end(), out.begin());
  return AudioClip(std::move(out), original.sample_rate());
}

}  // namespace patchwork_detail

/// STFT -> ISTFT with no modification; what embed reduces to at d = 0.
inline AudioClip reconstruct(const AudioClip& clip, const PatchworkConfig& cfg = {}) {
  return patchwork_detail::resynthesize(clip, stft(clip, cfg.geometry));
}

inline AudioClip embed(const AudioClip& clip, const Payload& payload, const WatermarkKey& key, double d,
                       const PatchworkConfig& cfg = {}) {
  const auto& g = cfg.geometry;
  const auto sets = derive_bin_sets(key, g.fft_size, clip.sample_rate());
  const std::size_t needed = kPayloadBits * key.frames_per_bit;
  const std::size_t frames = g.frame_count(clip.size());
  require(frames >= needed, ErrorCode::kClipTooShort,
          "clip has " + std::to_string(frames) + " frames, payload needs " + std::to_string(needed));

  auto spec = stft(clip, g);
  auto mag = magnitude(spec);
  const double s_ref = cfg.reference_fraction * reference_peak(mag, sets);
  const auto mask = whitening_mask(key);
  for (std::size_t t = 0; t < frames; ++t) {
    auto row = mag.frames.row(t);
    std::vector<double> before(row.begin(), row.end());
    const std::size_t i = (t / key.frames_per_bit) % kPayloadBits;
    embed_bit(row, sets, cfg.whiten ? payload[i] ^ mask[i] : payload[i], d, s_ref);
    auto bins = spec.frames.row(t);
    for (std::size_t k = 0; k < bins.size(); ++k)
      if (before[k] > 0.0 && row[k] != before[k]) bins[k] *= row[k] / before[k];
  }
  return patchwork_detail::resynthesize(clip, spec);
}

namespace patchwork_detail {

inline DetectionResult detect_aligned(const AudioClip& clip, const BinSets& sets, const WatermarkKey& key,
                                      const PatchworkConfig& cfg, const Payload* reference) {
  DetectionResult r;
  const auto mag = magnitude(stft(clip, cfg.geometry));
  const std::size_t frames = mag.frames.rows();
  const double s_ref = cfg.reference_fraction * reference_peak(mag, sets);
  if (frames == 0 || s_ref <= 0.0) return r;

  r.valid = true;
  r.per_bit_margin.assign(kPayloadBits, 0.0);
  std::vector<double> margins(frames);
  if (cfg.center_bins) {
    auto value = [&](double s) {
      const double u = std::max(s, s_ref) / s_ref;
      return cfg.statistic == Statistic::kLogMean ? std::log(u) : u;
    };
    auto set_means = [&](const std::vector<std::size_t>& bins, double sign) {
      for (auto k : bins) {
        double mean = 0.0;
        for (std::size_t t = 0; t < frames; ++t) mean += value(mag.frames.row(t)[k]);
        mean /= static_cast<double>(frames);
        for (std::size_t t = 0; t < frames; ++t)
          margins[t] += sign * (value(mag.frames.row(t)[k]) - mean) / static_cast<double>(bins.size());
      }
    };
    set_means(sets.a, 1.0);
    set_means(sets.b, -1.0);
  } else {
    for (std::size_t t = 0; t < frames; ++t) margins[t] = frame_margin(mag.frames.row(t), sets, s_ref, cfg.statistic);
  }
  // each bit group contributes its mean frame margin
  for (std::size_t start = 0; start < frames; start += key.frames_per_bit) {
    const std::size_t end = std::min(frames, start + key.frames_per_bit);
    double acc = 0.0;
    for (std::size_t t = start; t < end; ++t) acc += margins[t];
    r.per_bit_margin[(start / key.frames_per_bit) % kPayloadBits] += acc / static_cast<double>(end - start);
  }
  if (cfg.whiten) {
    const auto mask = whitening_mask(key);
    for (std::size_t i = 0; i < kPayloadBits; ++i)
      if (mask[i]) r.per_bit_margin[i] = -r.per_bit_margin[i];
  }
  double abs_sum = 0.0, aligned = 0.0;
  for (std::size_t i = 0; i < kPayloadBits; ++i) {
    const double m = r.per_bit_margin[i];
    r.decoded_bits.push_back(m > 0.0 ? 1 : 0);
    abs_sum += std::abs(m);
    if (reference) aligned += m * (2.0 * (*reference)[i] - 1.0);
  }
  r.confidence = abs_sum / kPayloadBits;
  if (reference) {
    r.score = aligned / kPayloadBits;
    r.hard_decision = r.bit_errors(*reference) == 0;
  }
  return r;
}

}  // namespace patchwork_detail

/// Decodes the payload with soft repetition combining: margins of every
/// repetition are summed per bit position before the sign decision.
inline DetectionResult detect(const AudioClip& clip, const WatermarkKey& key, const Payload* reference = nullptr,
                              const PatchworkConfig& cfg = {}, const SpeedSearch& speed = {}) {
  const auto sets = derive_bin_sets(key, cfg.geometry.fft_size, clip.sample_rate());
  if (!speed.enabled) return patchwork_detail::detect_aligned(clip, sets, key, cfg, reference);

  // the clip was stretched by an unknown factor f; undo it with 1 / f
  auto try_factor = [&](double f) {
    auto r = patchwork_detail::detect_aligned(time_stretch(clip, 1.0 / f), sets, key, cfg, reference);
    r.speed = f;
    return r;
  };
  DetectionResult best = try_factor(1.0);
  auto scan = [&](double lo, double hi, double step) {
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) {
      auto r = try_factor(lo + step * static_cast<double>(i));
      if (r.valid && (!best.valid || r.confidence > best.confidence)) best = std::move(r);
    }
  };
  scan(speed.min_factor, speed.max_factor, speed.coarse_step);
  const double center = best.speed;
  scan(std::max(speed.min_factor, center - speed.coarse_step), std::min(speed.max_factor, center + speed.coarse_step),
       speed.fine_step);
  return best;
}

struct StrengthResult {
  double strength = 0.0;
  bool success = false;
};

/// Smallest grid strength whose clean round trip decodes the payload exactly.
/// On failure the largest grid value is returned with success = false.
inline StrengthResult search_strength(const AudioClip& clip, const Payload& payload, const WatermarkKey& key,
                                      const StrengthGrid& grid = {}, const PatchworkConfig& cfg = {}) {
  for (double d : grid.values()) {
    auto marked = embed(clip, payload, key, d, cfg);
    if (detect(marked, key, &payload, cfg).hard_decision) return {d, true};
  }
  return {grid.max(), false};
}

/// Mean absolute log-magnitude difference between two clips over all bins.
inline double log_spectral_distortion(const AudioClip& a, const AudioClip& b, const StftGeometry& g = {1024, 512, 1024}) {
  const auto ma = magnitude(stft(a, g)), mb = magnitude(stft(b, g));
  require(ma.frames.rows() == mb.frames.rows(), ErrorCode::kShapeMismatch, "clips differ in frame count");
  const double floor = 1e-9;
  double acc = 0.0;
  for (std::size_t i = 0; i < ma.frames.data().size(); ++i)
    acc += std::abs(std::log(std::max(ma.frames.data()[i], floor)) - std::log(std::max(mb.frames.data()[i], floor)));
  return ma.frames.data().empty() ? 0.0 : acc / static_cast<double>(ma.frames.data().size());
}

}  // namespace cwm
