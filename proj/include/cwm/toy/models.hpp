#pragma once

// Small stand-ins for a neural vocoder (G), a waveform discriminator (D) and
// a watermark detector (WM), sized to train on one CPU core in minutes.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cwm/autograd/features.hpp"
#include "cwm/autograd/layers.hpp"
#include "cwm/mel.hpp"
#include "cwm/random.hpp"

namespace cwm::toy {

using ag::Tensor;

/// Named parameter list. A frozen copy holds the same values as constants,
/// so a forward pass through it builds no gradient path into the weights.
class Module {
 public:
  std::size_t size() const noexcept { return params_.size(); }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  std::vector<Tensor>& params() noexcept { return params_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 protected:
  const Tensor& p(std::size_t i) const { return params_[i]; }

  /// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void add(std::string name, ag::Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(ag::numel(shape));
    for (auto& x : v) x = uniform(rng, -bound, bound);
    params_.push_back(Tensor::parameter(std::move(shape), std::move(v)));
    names_.push_back(std::move(name));
  }

  void add_conv(const std::string& name, std::size_t cout, std::size_t cin, std::size_t k, Rng& rng) {
    add(name + ".weight", {cout, cin, k}, cin * k, rng);
    add(name + ".bias", {cout}, cin * k, rng);
  }

  void freeze_into(Module& other) const {
    other.names_ = names_;
    other.params_.clear();
    for (const auto& t : params_) other.params_.push_back(ag::detach(t));
  }

 private:
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

inline constexpr double kLeakySlope = 0.1;

// ---------------------------------------------------------------- generator

struct GeneratorConfig {
  int sample_rate = 8000;
  std::size_t n_mels = 16;
  std::size_t hop = 16;  // samples per conditioning frame; equals the total upsampling
  std::size_t frame = 64;
  std::vector<std::size_t> channels{32, 16, 8, 8, 4};  // pre-conv width, then one per 2x stage
  std::size_t pre_kernel = 7;
  std::size_t stage_kernel = 5;
  std::size_t post_kernel = 7;
  double input_scale = 0.2;

  StftGeometry geometry() const { return {frame, hop, frame}; }
};

/// Conditioning features: log-mel frames centered every `hop` samples, one
/// frame per output hop, [n_mels, N / hop].
inline Matrix<double> conditioning_mel(std::span<const double> x, const GeneratorConfig& cfg) {
  require(x.size() % cfg.hop == 0 && !x.empty(), ErrorCode::kShapeMismatch,
          "conditioning input length must be a positive multiple of the hop");
  const std::size_t pad = (cfg.frame - cfg.hop) / 2;
  std::vector<double> padded(x.size() + 2 * pad + (cfg.frame - cfg.hop) % 2, 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(pad));
  static thread_local std::unique_ptr<std::pair<GeneratorConfig, MelFilterbank>> cache;
  if (!cache || cache->first.n_mels != cfg.n_mels || cache->first.frame != cfg.frame ||
      cache->first.sample_rate != cfg.sample_rate)
    cache = std::make_unique<std::pair<GeneratorConfig, MelFilterbank>>(
        cfg, mel_filterbank(cfg.n_mels, cfg.frame, cfg.sample_rate, 0.0, cfg.sample_rate / 2.0));
  const auto mel = log_mel(AudioClip(std::move(padded), cfg.sample_rate), cache->second, cfg.geometry());
  // transpose to channels-first
  Matrix<double> out(mel.cols(), mel.rows());
  for (std::size_t t = 0; t < mel.rows(); ++t)
    for (std::size_t m = 0; m < mel.cols(); ++m) out(m, t) = mel(t, m);
  return out;
}

class ToyGenerator : public Module {
 public:
  ToyGenerator() = default;
  ToyGenerator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    require(cfg.channels.size() >= 2, ErrorCode::kInvalidArgument, "generator needs at least one stage");
    require((std::size_t{1} << (cfg.channels.size() - 1)) == cfg.hop, ErrorCode::kInvalidArgument,
            "generator hop must equal 2^stages");
    Rng rng(seed);
    add_conv("pre", cfg.channels[0], cfg.n_mels, cfg.pre_kernel, rng);
    for (std::size_t s = 1; s < cfg.channels.size(); ++s)
      add_conv("up" + std::to_string(s), cfg.channels[s], cfg.channels[s - 1], cfg.stage_kernel, rng);
    add_conv("post", 1, cfg.channels.back(), cfg.post_kernel, rng);
  }

  const GeneratorConfig& config() const noexcept { return cfg_; }

  ToyGenerator frozen() const {
    ToyGenerator g;
    g.cfg_ = cfg_;
    freeze_into(g);
    return g;
  }

  /// mel [n_mels, T] -> waveform [T * hop], strictly inside (-1, 1).
  Tensor operator()(const Tensor& mel) const {
    require(mel.rank() == 2 && mel.dim(0) == cfg_.n_mels, ErrorCode::kShapeMismatch, "generator input must be [n_mels, T]");
    auto h = ag::scale(mel, cfg_.input_scale);
    h = ag::leaky_relu(ag::conv1d(h, p(0), p(1), {1, cfg_.pre_kernel / 2}), kLeakySlope);
    std::size_t i = 2;
    for (std::size_t s = 1; s < cfg_.channels.size(); ++s, i += 2) {
      h = ag::upsample_nearest(h, 2);
      h = ag::leaky_relu(ag::conv1d(h, p(i), p(i + 1), {1, cfg_.stage_kernel / 2}), kLeakySlope);
    }
    h = ag::conv1d(h, p(i), p(i + 1), {1, cfg_.post_kernel / 2});
    // tanh alone rounds to +-1 for large inputs
    return ag::reshape(ag::scale(ag::tanh(h), 0.999), {h.size()});
  }

  Tensor operator()(const Matrix<double>& mel) const {
    return (*this)(Tensor::constant({mel.rows(), mel.cols()}, mel.data()));
  }

 private:
  GeneratorConfig cfg_;
};

// ---------------------------------------------------------------- discriminator

struct ConvSpec {
  std::size_t channels;
  std::size_t kernel;
  std::size_t stride;
};

struct DiscriminatorConfig {
  std::vector<ConvSpec> layers{{8, 15, 4}, {16, 15, 4}, {32, 5, 1}};
  std::size_t out_kernel = 3;
};

struct DiscriminatorOutput {
  Tensor scores;                   // per-position scores
  std::vector<Tensor> activations;  // after each hidden layer
};

/// Raw-waveform conv stack ending in per-position realness scores.
class ToyDiscriminator : public Module {
 public:
  ToyDiscriminator() = default;
  ToyDiscriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    std::size_t cin = 1;
    for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
      add_conv("conv" + std::to_string(l), cfg.layers[l].channels, cin, cfg.layers[l].kernel, rng);
      cin = cfg.layers[l].channels;
    }
    add_conv("out", 1, cin, cfg.out_kernel, rng);
  }

  ToyDiscriminator frozen() const {
    ToyDiscriminator d;
    d.cfg_ = cfg_;
    freeze_into(d);
    return d;
  }

  DiscriminatorOutput operator()(const Tensor& x) const {
    DiscriminatorOutput out;
    auto h = ag::reshape(x, {1, x.size()});
    std::size_t i = 0;
    for (const auto& l : cfg_.layers) {
      h = ag::leaky_relu(ag::conv1d(h, p(i), p(i + 1), {l.stride, l.kernel / 2}), kLeakySlope);
      out.activations.push_back(h);
      i += 2;
    }
    out.scores = ag::conv1d(h, p(i), p(i + 1), {1, cfg_.out_kernel / 2});
    return out;
  }

 private:
  DiscriminatorConfig cfg_;
};

// ---------------------------------------------------------------- detector

enum class Frontend { kLfcc, kRaw };

inline const char* to_string(Frontend f) { return f == Frontend::kLfcc ? "lfcc" : "raw"; }

inline Frontend parse_frontend(const std::string& s) {
  if (s == "lfcc") return Frontend::kLfcc;
  if (s == "raw") return Frontend::kRaw;
  throw Error(ErrorCode::kInvalidArgument, "unknown detector frontend '" + s + "'");
}

struct DetectorConfig {
  Frontend frontend = Frontend::kLfcc;
  int sample_rate = 8000;
  std::size_t channels = 8;
  std::size_t kernel = 3;
  double input_scale = 0.1;  // LFCC statics span tens of units
  // raw frontend only
  std::vector<ConvSpec> raw_layers{{8, 15, 4}, {16, 15, 4}, {16, 5, 1}};
};

/// Scalar scorer: higher means "natural". LFCC frontend: features -> two
/// convolutions over time -> global average -> affine. Raw frontend: strided
/// conv stack over the waveform -> global average -> affine. There is no
/// normalization layer of any kind.
class ToyDetector : public Module {
 public:
  ToyDetector() = default;
  ToyDetector(const DetectorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    if (cfg.frontend == Frontend::kLfcc) {
      lfcc_ = std::make_shared<ag::Lfcc>(LfccConfig{}, cfg.sample_rate);
      const std::size_t d = lfcc_->dimension();
      add_conv("conv0", cfg.channels, d, cfg.kernel, rng);
      add_conv("conv1", cfg.channels, cfg.channels, cfg.kernel, rng);
      add("head.weight", {1, cfg.channels}, cfg.channels, rng);
      add("head.bias", {1}, cfg.channels, rng);
    } else {
      std::size_t cin = 1;
      for (std::size_t l = 0; l < cfg.raw_layers.size(); ++l) {
        add_conv("conv" + std::to_string(l), cfg.raw_layers[l].channels, cin, cfg.raw_layers[l].kernel, rng);
        cin = cfg.raw_layers[l].channels;
      }
      add("head.weight", {1, cin}, cin, rng);
      add("head.bias", {1}, cin, rng);
    }
  }

  const DetectorConfig& config() const noexcept { return cfg_; }

  /// Describes every layer; used to assert there is no normalization layer.
  std::vector<std::string> layer_kinds() const {
    std::vector<std::string> kinds;
    if (cfg_.frontend == Frontend::kLfcc) kinds.push_back("lfcc");
    for (const auto& n : names())
      if (n.ends_with(".weight")) kinds.push_back(n.starts_with("head") ? "affine" : "conv1d");
    return kinds;
  }

  ToyDetector frozen() const {
    ToyDetector d;
    d.cfg_ = cfg_;
    d.lfcc_ = lfcc_;
    freeze_into(d);
    return d;
  }

  Tensor operator()(const Tensor& x) const {
    Tensor h;
    std::size_t i = 0;
    if (cfg_.frontend == Frontend::kLfcc) {
      require(lfcc_->frames(x.size()) >= 1, ErrorCode::kShapeMismatch, "detector input shorter than one frame");
      h = ag::scale(ag::transpose((*lfcc_)(x)), cfg_.input_scale);
      for (; i < 4; i += 2) h = ag::leaky_relu(ag::conv1d(h, p(i), p(i + 1), {1, cfg_.kernel / 2}), kLeakySlope);
    } else {
      h = ag::reshape(x, {1, x.size()});
      for (const auto& l : cfg_.raw_layers) {
        h = ag::leaky_relu(ag::conv1d(h, p(i), p(i + 1), {l.stride, l.kernel / 2}), kLeakySlope);
        i += 2;
      }
    }
    return ag::reshape(ag::linear(ag::mean_last(h), p(i), p(i + 1)), {1});
  }

  double score(std::span<const double> x) const {
    return (*this)(Tensor::constant({x.size()}, std::vector<double>(x.begin(), x.end()))).item();
  }

 private:
  DetectorConfig cfg_;
  std::shared_ptr<ag::Lfcc> lfcc_;
};

}  // namespace cwm::toy
