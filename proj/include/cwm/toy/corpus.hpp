#pragma once

// Synthetic harmonic "utterances" standing in for a speech corpus.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cwm/audio.hpp"
#include "cwm/manifest.hpp"
#include "cwm/random.hpp"

namespace cwm::toy {

struct ToyUtteranceInfo {
  double f0 = 0.0;
  std::size_t harmonics = 0;
};

struct ToyCorpus {
  std::vector<AudioClip> clips;
  std::vector<ToyUtteranceInfo> info;
  CorpusManifest manifest;  // paths "toy:<index>"

  std::vector<AudioClip> split(Split s) const {
    std::vector<AudioClip> out;
    for (const auto& r : manifest.records)
      if (r.split == s) out.push_back(clips[std::stoull(r.path.substr(4))]);
    return out;
  }
};

/// Piecewise-linear random envelope with a control point every 0.25 s.
inline std::vector<double> random_envelope(std::size_t n, int sample_rate, Rng& rng) {
  const auto step = static_cast<std::size_t>(0.25 * sample_rate);
  const std::size_t points = n / step + 2;
  std::vector<double> ctrl(points);
  for (auto& c : ctrl) c = 0.2 + 0.8 * uniform01(rng);
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i / step;
    const double frac = static_cast<double>(i % step) / static_cast<double>(step);
    env[i] = ctrl[k] * (1.0 - frac) + ctrl[k + 1] * frac;
  }
  return env;
}

/// Sum of 3 to 8 harmonics of a fundamental in [80, 300] Hz, each with its
/// own random amplitude envelope, RMS-normalized into [0.1, 0.3] (less if
/// needed to keep the peak at 0.95), plus white noise 40 dB below the
/// harmonic RMS.
inline AudioClip synth_utterance(double seconds, int sample_rate, std::uint64_t seed, ToyUtteranceInfo* info = nullptr) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  const double f0 = uniform(rng, 80.0, 300.0);
  const std::size_t harmonics = 3 + static_cast<std::size_t>(uniform_index(rng, 6));
  std::vector<double> x(n, 0.0);
  for (std::size_t h = 1; h <= harmonics; ++h) {
    const double f = f0 * static_cast<double>(h);
    if (f >= 0.45 * sample_rate) break;
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double tilt = 1.0 / static_cast<double>(h);
    const auto env = random_envelope(n, sample_rate, rng);
    const double w = 2.0 * std::numbers::pi * f / sample_rate;
    for (std::size_t i = 0; i < n; ++i) x[i] += tilt * env[i] * std::sin(w * static_cast<double>(i) + phase);
  }
  const double target = uniform(rng, 0.1, 0.3);
  double gain = target / std::max(rms(x), 1e-12);
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  gain = std::min(gain, 0.95 / std::max(peak, 1e-12));
  for (auto& v : x) v *= gain;
  const double floor_rms = rms(x) * 1e-2;
  for (auto& v : x) v += floor_rms * normal(rng);
  if (info) *info = {f0, harmonics};
  return AudioClip(std::move(x), sample_rate);
}

inline ToyCorpus synth_toy_corpus(std::size_t n_utterances, double seconds, int sample_rate = 8000,
                                  std::uint64_t seed = 0) {
  ToyCorpus corpus;
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < n_utterances; ++i) {
    ToyUtteranceInfo info;
    corpus.clips.push_back(synth_utterance(seconds, sample_rate, mix_seed(seed, i), &info));
    corpus.info.push_back(info);
    paths.push_back("toy:" + std::to_string(i));
  }
  if (n_utterances >= 10) {
    corpus.manifest = split_manifest(paths, seed);
  } else {
    for (const auto& p : paths) corpus.manifest.records.push_back({p, Split::kTest, {}});
  }
  return corpus;
}

}  // namespace cwm::toy
