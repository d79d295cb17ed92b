#pragma once

// Channel conditions: linear-interpolation time stretch and additive noise at
// a fixed SNR, plus the noise corpus they draw from.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cwm/audio.hpp"
#include "cwm/linear_map.hpp"
#include "cwm/manifest.hpp"
#include "cwm/random.hpp"
#include "cwm/wav.hpp"

namespace cwm {

inline std::size_t stretched_length(std::size_t n, double factor) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * factor));
}

inline void check_stretch_factor(double factor) {
  require(factor >= 0.5 && factor <= 2.0, ErrorCode::kInvalidArgument, "stretch factor must be in [0.5, 2]");
}

/// Output sample n reads the input at n / factor (factor > 1 lengthens),
/// linearly interpolated, clamped at the last input sample.
inline SparseLinearMap stretch_map(std::size_t n, double factor) {
  check_stretch_factor(factor);
  const std::size_t m = n == 0 ? 0 : stretched_length(n, factor);
  SparseLinearMap map(n, m);
  for (std::size_t o = 0; o < m; ++o) {
    const double pos = std::min(static_cast<double>(o) / factor, static_cast<double>(n - 1));
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (frac == 0.0 || i + 1 >= n) {
      map.row(o).push_back({i, 1.0});
    } else {
      map.row(o).push_back({i, 1.0 - frac});
      map.row(o).push_back({i + 1, frac});
    }
  }
  return map;
}

/// Direct evaluation of stretch_map; same arithmetic, no map storage.
inline AudioClip time_stretch(const AudioClip& clip, double factor) {
  check_stretch_factor(factor);
  const std::size_t n = clip.size();
  const std::size_t m = n == 0 ? 0 : stretched_length(n, factor);
  const auto x = clip.samples();
  std::vector<double> y(m);
  for (std::size_t o = 0; o < m; ++o) {
    const double pos = std::min(static_cast<double>(o) / factor, static_cast<double>(n - 1));
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    y[o] = (frac == 0.0 || i + 1 >= n) ? 1.0 * x[i] : (1.0 - frac) * x[i] + frac * x[i + 1];
  }
  return AudioClip(std::move(y), clip.sample_rate());
}

inline double snr_db(std::span<const double> signal, std::span<const double> noise) {
  return 20.0 * std::log10(rms(signal) / rms(noise));
}

struct NoisyMix {
  AudioClip mixture;
  std::vector<double> noise;  // scaled noise actually added
  double gain = 0.0;
  std::size_t offset = 0;
};

/// Mixes `noise` into `clip` at `snr` dB. The noise is looped from a seeded
/// random start offset to cover the clip; the gain is set from full-utterance
/// RMS so the mixture SNR is exact.
inline NoisyMix add_noise_detailed(const AudioClip& clip, const AudioClip& noise, double snr, std::uint64_t seed) {
  require(clip.sample_rate() == noise.sample_rate(), ErrorCode::kRateMismatch,
          std::to_string(clip.sample_rate()) + " vs " + std::to_string(noise.sample_rate()));
  require(!noise.empty() && rms(noise) > 1e-8, ErrorCode::kSilentNoise, "noise RMS <= 1e-8");
  Rng rng(seed);
  NoisyMix out;
  out.offset = static_cast<std::size_t>(uniform_index(rng, noise.size()));
  std::vector<double> segment(clip.size());
  for (std::size_t i = 0; i < segment.size(); ++i) segment[i] = noise[(out.offset + i) % noise.size()];
  const double seg_rms = rms(segment);
  require(clip.empty() || seg_rms > 1e-8, ErrorCode::kSilentNoise, "selected noise segment is silent");
  out.gain = clip.empty() ? 0.0 : rms(clip) / (seg_rms * std::pow(10.0, snr / 20.0));
  std::vector<double> mixed(clip.size());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    segment[i] *= out.gain;
    mixed[i] = clip[i] + segment[i];
  }
  out.noise = std::move(segment);
  out.mixture = AudioClip(std::move(mixed), clip.sample_rate());
  return out;
}

inline AudioClip add_noise(const AudioClip& clip, const AudioClip& noise, double snr, std::uint64_t seed) {
  return add_noise_detailed(clip, noise, snr, seed).mixture;
}

enum class NoiseColor { kWhite, kPink, kBrown };

/// Seeded colored Gaussian noise normalized to unit peak.
inline AudioClip synthetic_noise(std::size_t n, int sample_rate, NoiseColor color, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0, brown = 0;
  for (auto& v : x) {
    const double w = normal(rng);
    switch (color) {
      case NoiseColor::kWhite: v = w; break;
      case NoiseColor::kPink:
        // Kellet's economy pink filter
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
        break;
      case NoiseColor::kBrown:
        brown = 0.995 * brown + 0.1 * w;
        v = brown;
        break;
    }
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (auto& v : x) v /= peak;
  return AudioClip(std::move(x), sample_rate);
}

/// Noise clips with split labels. Paths of the form "synthetic:<index>" are
/// generated on demand; anything else is read as a WAV file.
class NoiseCorpus {
 public:
  using Loader = std::function<AudioClip(const std::string&)>;

  explicit NoiseCorpus(CorpusManifest manifest, Loader loader = default_loader())
      : manifest_(std::move(manifest)), loader_(std::move(loader)) {}

  /// `count` generated clips of `seconds` each, split 80/10/10.
  static NoiseCorpus synthetic(std::size_t count, int sample_rate, double seconds = 3.0, std::uint64_t seed = 0) {
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < count; ++i) paths.push_back("synthetic:" + std::to_string(i));
    const auto n = static_cast<std::size_t>(seconds * sample_rate);
    Loader loader = [n, sample_rate, seed](const std::string& path) {
      const auto index = std::stoull(path.substr(path.find(':') + 1));
      return synthetic_noise(n, sample_rate, static_cast<NoiseColor>(index % 3), mix_seed(seed, index));
    };
    return NoiseCorpus(split_manifest(paths, seed), std::move(loader));
  }

  static Loader default_loader() {
    return [](const std::string& path) { return load_wav(path); };
  }

  const CorpusManifest& manifest() const noexcept { return manifest_; }

  struct Draw {
    std::string path;
    AudioClip clip;
  };

  Draw sample(Split split, std::uint64_t seed) const {
    const auto candidates = manifest_.paths(split);
    require(!candidates.empty(), ErrorCode::kEmptySplit, std::string("no noise files in split ") + to_string(split));
    Rng rng(seed);
    const auto& path = candidates[uniform_index(rng, candidates.size())];
    return {path, loader_(path)};
  }

 private:
  CorpusManifest manifest_;
  Loader loader_;
};

inline AudioClip sample_noise(const NoiseCorpus& corpus, Split split, std::uint64_t seed) {
  return corpus.sample(split, seed).clip;
}

enum class Condition { kClean, kStretch, kNoise, kStretchNoise };

inline constexpr std::array<Condition, 4> kAllConditions{Condition::kClean, Condition::kStretch, Condition::kNoise,
                                                         Condition::kStretchNoise};

inline const char* to_string(Condition c) {
  switch (c) {
    case Condition::kClean: return "clean";
    case Condition::kStretch: return "stretch";
    case Condition::kNoise: return "noise";
    case Condition::kStretchNoise: return "s+n";
  }
  return "?";
}

inline Condition parse_condition(const std::string& s) {
  for (auto c : kAllConditions)
    if (s == to_string(c)) return c;
  throw Error(ErrorCode::kParse, "unknown condition '" + s + "'");
}

inline bool has_stretch(Condition c) { return c == Condition::kStretch || c == Condition::kStretchNoise; }
inline bool has_noise(Condition c) { return c == Condition::kNoise || c == Condition::kStretchNoise; }

struct ConditionParams {
  double stretch_min = 0.9;
  double stretch_max = 1.1;
  double snr_db = 10.0;
  std::optional<double> forced_factor;  // overrides the random draw
  Split noise_split = Split::kTest;
};

struct AppliedCondition {
  AudioClip clip;
  double factor = 1.0;
  std::string noise_path;
};

/// Stretch (when requested) happens before noise, so the SNR is measured
/// against the stretched signal.
inline AppliedCondition apply_condition_detailed(const AudioClip& clip, Condition condition,
                                                 const NoiseCorpus* corpus, std::uint64_t seed,
                                                 const ConditionParams& params = {}) {
  AppliedCondition out{clip, 1.0, {}};
  Rng rng(seed);
  const double drawn = uniform(rng, params.stretch_min, params.stretch_max);
  const std::uint64_t noise_seed = rng();
  const std::uint64_t offset_seed = rng();
  if (has_stretch(condition)) {
    out.factor = params.forced_factor.value_or(drawn);
    out.clip = time_stretch(out.clip, out.factor);
  }
  if (has_noise(condition)) {
    require(corpus != nullptr, ErrorCode::kInvalidArgument, "noise condition needs a noise corpus");
    auto draw = corpus->sample(params.noise_split, noise_seed);
    out.noise_path = draw.path;
    out.clip = add_noise(out.clip, draw.clip, params.snr_db, offset_seed);
  }
  return out;
}

inline AudioClip apply_condition(const AudioClip& clip, Condition condition, const NoiseCorpus* corpus,
                                 std::uint64_t seed, const ConditionParams& params = {}) {
  return apply_condition_detailed(clip, condition, corpus, seed, params).clip;
}

}  // namespace cwm
