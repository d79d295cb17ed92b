#pragma once

// Alternating GAN training of the toy vocoder with an attached watermark
// detector. Odd steps update D; even steps update G and WM together.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwm/augment.hpp"
#include "cwm/toy/corpus.hpp"
#include "cwm/toy/losses.hpp"
#include "cwm/toy/models.hpp"
#include "cwm/toy/optim.hpp"

namespace cwm::toy {

struct TrainConfig {
  Role role = Role::kCollaborator;
  bool augment = false;  // stretch + noise before the detector
  std::size_t steps = 2000;
  std::size_t batch = 2;
  std::size_t crop = 8192;
  std::uint64_t seed = 0;
  AdamWConfig adam;
  double lr_decay = 0.999;  // per epoch over the training split
  LossWeights weights;
  ConditionParams augmentation{0.9, 1.1, 10.0, std::nullopt, Split::kTrain};
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  DetectorConfig detector;
  StftGeometry mel_geometry{256, 64, 256};
  std::size_t mel_bins = 40;

  void validate() const {
    require(role != Role::kDiscriminator, ErrorCode::kInvalidArgument, "the attached detector cannot be the discriminator");
    require(batch >= 1 && crop >= mel_geometry.frame_len && crop % generator.hop == 0, ErrorCode::kInvalidArgument,
            "crop must cover one mel frame and be a multiple of the generator hop");
    require(adam.lr >= 0.0 && lr_decay > 0.0 && lr_decay <= 1.0, ErrorCode::kInvalidArgument,
            "learning rate must be >= 0 and decay in (0, 1]");
  }
};

struct StepLog {
  std::size_t step = 0;
  bool d_step = false;
  double loss_d = 0.0;
  double adv = 0.0;
  double fm = 0.0;
  double mel = 0.0;
  double wm = 0.0;
  double lr = 0.0;
};

/// The two objectives of the joint step, kept apart so each can be inspected.
struct JointObjective {
  Tensor generator;
  Tensor detector;

  Tensor total() const { return ag::add(generator, detector); }
};

/// One training example: a crop and its conditioning features.
struct Example {
  std::vector<double> audio;
  Matrix<double> mel;
};

/// Copies named parameter values from a checkpoint section into `m`.
inline void load_parameters(Module& m, const nlohmann::json& src) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    require(src.contains(m.names()[i]), ErrorCode::kParse, "checkpoint lacks parameter " + m.names()[i]);
    auto v = src.at(m.names()[i]).get<std::vector<double>>();
    require(v.size() == m.params()[i].size(), ErrorCode::kParse, "parameter " + m.names()[i] + " has wrong size");
    m.params()[i].mutable_value() = std::move(v);
  }
}

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<AudioClip> train, const NoiseCorpus* noise)
      : cfg_(std::move(cfg)),
        train_(std::move(train)),
        noise_(noise),
        g_(cfg_.generator, mix_seed(cfg_.seed, 1)),
        d_(cfg_.discriminator, mix_seed(cfg_.seed, 2)),
        wm_(cfg_.detector, mix_seed(cfg_.seed, 3)),
        opt_g_(g_.params(), cfg_.adam),
        opt_d_(d_.params(), cfg_.adam),
        opt_wm_(wm_.params(), cfg_.adam),
        mel_(cfg_.mel_geometry, cfg_.mel_bins, cfg_.generator.sample_rate, 0.0, cfg_.generator.sample_rate / 2.0) {
    cfg_.validate();
    require(!train_.empty(), ErrorCode::kEmptySplit, "no training clips");
    for (const auto& c : train_)
      require(c.size() >= cfg_.crop, ErrorCode::kClipTooShort, "training clip shorter than the crop");
    require(!cfg_.augment || noise_ != nullptr, ErrorCode::kInvalidArgument, "augmentation needs a noise corpus");
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  std::size_t step_count() const noexcept { return step_; }
  const ToyGenerator& generator() const noexcept { return g_; }
  const ToyDiscriminator& discriminator() const noexcept { return d_; }
  const ToyDetector& detector() const noexcept { return wm_; }
  ToyGenerator& generator() noexcept { return g_; }
  ToyDiscriminator& discriminator() noexcept { return d_; }
  ToyDetector& detector() noexcept { return wm_; }

  double learning_rate(std::size_t step) const {
    const std::size_t epoch = ((step - 1) * cfg_.batch) / train_.size();
    return cfg_.adam.lr * std::pow(cfg_.lr_decay, static_cast<double>(epoch));
  }

  /// Deterministic batch for a given step number (1-based).
  std::vector<Example> batch(std::size_t step) const {
    Rng rng(mix_seed(cfg_.seed, 0x6261746368ULL + step));
    std::vector<Example> out;
    for (std::size_t b = 0; b < cfg_.batch; ++b) {
      const auto& clip = train_[uniform_index(rng, train_.size())];
      const auto offset = uniform_index(rng, clip.size() - cfg_.crop + 1);
      Example e;
      e.audio.assign(clip.samples().begin() + static_cast<std::ptrdiff_t>(offset),
                     clip.samples().begin() + static_cast<std::ptrdiff_t>(offset + cfg_.crop));
      e.mel = conditioning_mel(e.audio, cfg_.generator);
      out.push_back(std::move(e));
    }
    return out;
  }

  StepLog step() {
    ++step_;
    const bool d_step = step_ % 2 == 1;
    StepLog log{step_, d_step, 0, 0, 0, 0, 0, learning_rate(step_)};
    const auto examples = batch(step_);
    if (d_step) {
      discriminator_step(examples, log);
    } else {
      generator_step(examples, log);
    }
    return log;
  }

  void run(std::size_t steps, const std::function<void(const StepLog&)>& on_step = {}) {
    for (std::size_t i = 0; i < steps; ++i) {
      auto log = step();
      if (on_step) on_step(log);
    }
  }

  /// Batch means of L_G and L_WM for the joint step. D is frozen; in the
  /// collaborator term WM's weights are constants, while WM's own objective
  /// sees a detached generator output. Each model's gradient of the sum is
  /// therefore the gradient of its own objective. Fills the component means
  /// in `log`.
  JointObjective generator_objective(const std::vector<Example>& examples, StepLog& log) const {
    const auto d = d_.frozen();
    const auto wm_fixed = wm_.frozen();
    std::optional<Augmentation> aug;
    if (cfg_.augment) aug = draw_augmentation(examples.size());
    auto channel = [&](const Tensor& x, std::size_t b) { return aug ? augment(x, *aug, b) : x; };

    Tensor sum_g, sum_wm, sum_adv, sum_fm, sum_mel;
    auto acc = [](Tensor& into, const Tensor& v) { into = into.defined() ? ag::add(into, v) : v; };
    for (std::size_t b = 0; b < examples.size(); ++b) {
      const auto& e = examples[b];
      const auto x_real = signal(e.audio);
      const auto x_gen = g_(e.mel);
      const auto real_out = d(x_real);
      const auto gen_out = d(x_gen);

      GeneratorLossTerms terms;
      terms.adv = loss_g_adv(gen_out.scores);
      terms.fm = loss_fm(real_out.activations, gen_out.activations);
      terms.mel = loss_mel(x_real, x_gen, mel_);
      const auto wm_real = wm_(channel(x_real, b));
      if (cfg_.role == Role::kCollaborator) terms.wm = loss_wm(ag::detach(wm_real), wm_fixed(channel(x_gen, b)));
      const auto l_g = generator_total_loss(cfg_.role, terms, cfg_.weights);
      const auto l_wm = loss_wm(wm_real, wm_(channel(ag::detach(x_gen), b)));

      acc(sum_g, l_g);
      acc(sum_wm, l_wm);
      acc(sum_adv, ag::detach(terms.adv));
      acc(sum_fm, ag::detach(terms.fm));
      acc(sum_mel, ag::detach(terms.mel));
    }
    const double inv = 1.0 / static_cast<double>(examples.size());
    JointObjective out{ag::scale(sum_g, inv), ag::scale(sum_wm, inv)};
    log.adv = sum_adv.item() * inv;
    log.fm = sum_fm.item() * inv;
    log.mel = sum_mel.item() * inv;
    log.wm = out.detector.item();
    return out;
  }

  // ------------------------------------------------------------ checkpoints

  nlohmann::json checkpoint() const {
    auto params = [](const Module& m) {
      nlohmann::json j = nlohmann::json::object();
      for (std::size_t i = 0; i < m.size(); ++i) j[m.names()[i]] = m.params()[i].value();
      return j;
    };
    return {{"format", "cwm-toy-checkpoint"},
            {"version", 1},
            {"step", step_},
            {"seed", cfg_.seed},
            {"role", to_string(cfg_.role)},
            {"augment", cfg_.augment},
            {"generator", params(g_)},
            {"discriminator", params(d_)},
            {"detector", params(wm_)},
            {"opt_generator", opt_g_.state()},
            {"opt_discriminator", opt_d_.state()},
            {"opt_detector", opt_wm_.state()}};
  }

  void restore(const nlohmann::json& j) {
    require(j.value("format", "") == "cwm-toy-checkpoint" && j.value("version", 0) == 1, ErrorCode::kParse,
            "not a version-1 toy checkpoint");
    require(j.at("seed").get<std::uint64_t>() == cfg_.seed && j.at("role").get<std::string>() == to_string(cfg_.role) &&
                j.at("augment").get<bool>() == cfg_.augment,
            ErrorCode::kInvalidArgument, "checkpoint was written by a different configuration");
    load_parameters(g_, j.at("generator"));
    load_parameters(d_, j.at("discriminator"));
    load_parameters(wm_, j.at("detector"));
    opt_g_.load_state(j.at("opt_generator"));
    opt_d_.load_state(j.at("opt_discriminator"));
    opt_wm_.load_state(j.at("opt_detector"));
    step_ = j.at("step").get<std::size_t>();
  }

  /// Written to a temporary file and renamed, so a crash never leaves a torn checkpoint.
  void save_checkpoint(const std::filesystem::path& path) const {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream os(tmp);
      require(static_cast<bool>(os), ErrorCode::kWriteFailed, "cannot write " + tmp);
      os << checkpoint().dump();
      require(static_cast<bool>(os), ErrorCode::kWriteFailed, "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
  }

  void load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorCode::kFileNotFound, path.string());
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
    restore(j);
  }

 private:
  static void check_finite(double v, const char* what, std::size_t step) {
    require(std::isfinite(v), ErrorCode::kNonFiniteLoss, std::string(what) + " at step " + std::to_string(step));
  }

  static Tensor signal(const std::vector<double>& x) { return Tensor::constant({x.size()}, x); }

  void discriminator_step(const std::vector<Example>& examples, StepLog& log) {
    const auto g = g_.frozen();
    d_.zero_grad();
    Tensor total;
    for (const auto& e : examples) {
      const auto x_gen = g(e.mel);
      auto l = loss_d(d_(signal(e.audio)).scores, d_(x_gen).scores);
      total = total.defined() ? ag::add(total, l) : l;
    }
    total = ag::scale(total, 1.0 / static_cast<double>(examples.size()));
    log.loss_d = total.item();
    check_finite(log.loss_d, "discriminator loss", step_);
    ag::backward(total);
    opt_d_.step(log.lr);
  }

  /// Stretch (one factor for the whole batch) then noise at a fixed SNR. The
  /// noise gain is computed from the current signal value and treated as a
  /// constant, so the gradient through the mix is the identity.
  struct Augmentation {
    ag::MapPtr stretch;
    std::vector<std::vector<double>> noise;  // unscaled segment per example
  };

  Augmentation draw_augmentation(std::size_t n_examples) const {
    Augmentation a;
    Rng rng(mix_seed(cfg_.seed, 0x6175676dULL + step_));
    const double factor = uniform(rng, cfg_.augmentation.stretch_min, cfg_.augmentation.stretch_max);
    a.stretch = ag::share(stretch_map(cfg_.crop, factor));
    const std::size_t len = a.stretch->out_size();
    for (std::size_t b = 0; b < n_examples; ++b) {
      const auto draw = noise_->sample(cfg_.augmentation.noise_split, rng());
      require(!draw.clip.empty(), ErrorCode::kSilentNoise, "empty noise clip " + draw.path);
      const auto offset = uniform_index(rng, draw.clip.size());
      std::vector<double> seg(len);
      for (std::size_t i = 0; i < len; ++i) seg[i] = draw.clip[(offset + i) % draw.clip.size()];
      require(rms(seg) > 1e-8, ErrorCode::kSilentNoise, "silent noise segment from " + draw.path);
      a.noise.push_back(std::move(seg));
    }
    return a;
  }

  Tensor augment(const Tensor& x, const Augmentation& a, std::size_t b) const {
    auto y = ag::map_last(x, a.stretch);
    const auto& seg = a.noise[b];
    const double gain = rms(y.value()) / (rms(seg) * std::pow(10.0, cfg_.augmentation.snr_db / 20.0));
    std::vector<double> scaled(seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i) scaled[i] = gain * seg[i];
    const std::size_t n = scaled.size();
    return ag::add(y, Tensor::constant({n}, std::move(scaled)));
  }

  void generator_step(const std::vector<Example>& examples, StepLog& log) {
    g_.zero_grad();
    wm_.zero_grad();
    const auto total = generator_objective(examples, log).total();
    check_finite(total.item(), "generator loss", step_);
    ag::backward(total);
    opt_g_.step(log.lr);
    opt_wm_.step(log.lr);
  }

  TrainConfig cfg_;
  std::vector<AudioClip> train_;
  const NoiseCorpus* noise_;
  ToyGenerator g_;
  ToyDiscriminator d_;
  ToyDetector wm_;
  AdamW opt_g_, opt_d_, opt_wm_;
  ag::LogMel mel_;
  std::size_t step_ = 0;
};

}  // namespace cwm::toy
