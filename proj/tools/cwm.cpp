// cwm: command-line front end for the watermarking toolkit.
//
// Exit status: 0 success, 1 runtime or data error, 2 usage error.
// Settings resolve as flag > --config file > built-in default, and the
// resolved settings are written next to the outputs as <command>.config.json.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cwm/augment.hpp"
#include "cwm/eval.hpp"
#include "cwm/patchwork.hpp"
#include "cwm/toy/experiment.hpp"
#include "cwm/wav.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cwm;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json defaults() {
  const toy::ExperimentConfig exp;
  const toy::TrainConfig& t = exp.train;
  return {
      {"in", ""},
      {"out", ""},
      {"out_dir", ""},
      {"key_seed", 0},
      {"payload", nullptr},
      {"strength", nullptr},
      {"grid", {{"min", 0.01}, {"max", 0.2}, {"step", 0.01}}},
      {"speed_search", true},
      {"conditions", {"clean", "stretch", "noise", "s+n"}},
      {"rounds", 20},
      {"seed", 0},
      {"jobs", 1},
      {"manifest", ""},
      {"noise", ""},
      {"eval",
       {{"mode", "patchwork"}, {"checkpoint", ""}, {"utterances", 50}, {"seconds", 5.0}, {"sample_rate", 16000}}},
      {"toy",
       {{"steps", t.steps},
        {"batch", t.batch},
        {"crop", t.crop},
        {"lr", t.adam.lr},
        {"lr_decay", t.lr_decay},
        {"weight_decay", t.adam.weight_decay},
        {"weights", {{"adv", t.weights.adv}, {"fm", t.weights.fm}, {"mel", t.weights.mel}, {"wm", t.weights.wm}}},
        {"frontend", to_string(t.detector.frontend)},
        {"seeds", exp.seeds},
        {"roles", {"collaborator", "observer"}},
        {"augment", exp.augment},
        {"utterances", exp.utterances},
        {"seconds", exp.seconds},
        {"corpus_seed", exp.corpus_seed},
        {"noise_clips", exp.noise_clips},
        {"eval_rounds", exp.eval_rounds},
        {"checkpoint_every", exp.checkpoint_every}}},
  };
}

/// Recursively overlays `patch` on `base`; keys unknown to the defaults are rejected.
void overlay(json& base, const json& patch, const std::string& where) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (!base.contains(it.key())) throw UsageError("unknown config key '" + where + it.key() + "'");
    auto& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object())
      overlay(slot, it.value(), where + it.key() + ".");
    else
      slot = it.value();
  }
}

template <class T>
T get(const json& j, const std::string& pointer) {
  try {
    return j.at(json::json_pointer(pointer)).get<T>();
  } catch (const json::exception& e) {
    throw UsageError("config value " + pointer + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// ------------------------------------------------------------------- flags

/// A flag bound to a location in the resolved config.
struct Binding {
  CLI::Option* option;
  std::function<void(json&)> apply;
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<Binding> bindings;
  std::string config_path;

  template <class T>
  void bind(const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(flag, *value, help);
    bindings.push_back({opt, [value, pointer](json& j) { j[json::json_pointer(pointer)] = *value; }});
  }

  void bind_list(const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<std::string>();
    auto* opt = app->add_option(flag, *value, help);
    bindings.push_back({opt, [value, pointer](json& j) { j[json::json_pointer(pointer)] = split_list(*value); }});
  }

  void bind_flag(const std::string& flag, const std::string& pointer, bool set_to, const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    bindings.push_back({opt, [pointer, set_to](json& j) { j[json::json_pointer(pointer)] = set_to; }});
  }

  json resolve() const {
    json cfg = defaults();
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw Error(ErrorCode::kFileNotFound, config_path);
      json file;
      try {
        is >> file;
      } catch (const json::exception& e) {
        throw UsageError(config_path + ": " + e.what());
      }
      if (!file.is_object()) throw UsageError(config_path + ": top level must be an object");
      overlay(cfg, file, "");
    }
    for (const auto& b : bindings)
      if (b.option->count() > 0) b.apply(cfg);
    return cfg;
  }
};

// ----------------------------------------------------------------- helpers

Payload payload_from(const json& cfg, bool required) {
  const auto& p = cfg.at("payload");
  if (p.is_null()) {
    if (required) throw UsageError("--payload is required");
    return Payload::random(get<std::uint64_t>(cfg, "/seed"));
  }
  try {
    return Payload::from_hex(p.get<std::string>());
  } catch (const Error& e) {
    throw UsageError(std::string("bad payload: ") + e.what());
  }
}

std::string require_path(const json& cfg, const char* key, const char* flag) {
  auto v = cfg.at(key).get<std::string>();
  if (v.empty()) throw UsageError(std::string(flag) + " is required");
  return v;
}

StrengthGrid grid_from(const json& cfg) {
  try {
    return StrengthGrid(get<double>(cfg, "/grid/min"), get<double>(cfg, "/grid/max"), get<double>(cfg, "/grid/step"));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::vector<Condition> conditions_from(const json& cfg) {
  std::vector<Condition> out;
  for (const auto& s : get<std::vector<std::string>>(cfg, "/conditions")) {
    try {
      out.push_back(parse_condition(s));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("no conditions given");
  return out;
}

NoiseCorpus noise_from(const json& cfg, int sample_rate) {
  const auto path = get<std::string>(cfg, "/noise");
  if (path.empty()) return NoiseCorpus::synthetic(30, sample_rate, 3.0, mix_seed(get<std::uint64_t>(cfg, "/seed"), 0x6e6f));
  return NoiseCorpus(read_jsonl(path));
}

/// Test-split WAVs from --manifest, or a seeded synthetic corpus.
std::vector<AudioClip> test_clips(const json& cfg, int sample_rate) {
  const auto manifest = get<std::string>(cfg, "/manifest");
  std::vector<AudioClip> clips;
  if (!manifest.empty()) {
    for (const auto& path : read_jsonl(manifest).paths(Split::kTest)) clips.push_back(load_wav(path));
    if (clips.empty()) throw Error(ErrorCode::kEmptySplit, manifest + " has no test records");
    return clips;
  }
  const auto n = get<std::size_t>(cfg, "/eval/utterances");
  const auto seconds = get<double>(cfg, "/eval/seconds");
  const auto seed = get<std::uint64_t>(cfg, "/seed");
  for (std::size_t i = 0; i < n; ++i) clips.push_back(toy::synth_utterance(seconds, sample_rate, mix_seed(seed, i)));
  return clips;
}

toy::ExperimentConfig experiment_from(const json& cfg) {
  toy::ExperimentConfig e;
  auto& t = e.train;
  t.steps = get<std::size_t>(cfg, "/toy/steps");
  t.batch = get<std::size_t>(cfg, "/toy/batch");
  t.crop = get<std::size_t>(cfg, "/toy/crop");
  t.adam.lr = get<double>(cfg, "/toy/lr");
  t.adam.weight_decay = get<double>(cfg, "/toy/weight_decay");
  t.lr_decay = get<double>(cfg, "/toy/lr_decay");
  t.weights = {get<double>(cfg, "/toy/weights/adv"), get<double>(cfg, "/toy/weights/fm"),
               get<double>(cfg, "/toy/weights/mel"), get<double>(cfg, "/toy/weights/wm")};
  try {
    t.detector.frontend = toy::parse_frontend(get<std::string>(cfg, "/toy/frontend"));
    e.roles.clear();
    for (const auto& r : get<std::vector<std::string>>(cfg, "/toy/roles")) e.roles.push_back(toy::parse_role(r));
    t.validate();
  } catch (const Error& err) {
    throw UsageError(err.what());
  }
  e.seeds = get<std::vector<std::uint64_t>>(cfg, "/toy/seeds");
  e.augment = get<std::vector<bool>>(cfg, "/toy/augment");
  e.utterances = get<std::size_t>(cfg, "/toy/utterances");
  e.seconds = get<double>(cfg, "/toy/seconds");
  e.corpus_seed = get<std::uint64_t>(cfg, "/toy/corpus_seed");
  e.noise_clips = get<std::size_t>(cfg, "/toy/noise_clips");
  e.eval_rounds = get<std::size_t>(cfg, "/toy/eval_rounds");
  e.checkpoint_every = get<std::size_t>(cfg, "/toy/checkpoint_every");
  e.jobs = get<std::size_t>(cfg, "/jobs");
  if (e.seeds.empty() || e.roles.empty() || e.augment.empty()) throw UsageError("toy seeds, roles and augment must be non-empty");
  if (e.checkpoint_every == 0 || e.eval_rounds == 0) throw UsageError("checkpoint_every and eval_rounds must be >= 1");
  return e;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::kWriteFailed, path.string());
  os << text;
}

/// Sidecar with the resolved settings, placed in --out-dir or beside --out.
void write_sidecar(const std::string& command, const json& cfg) {
  const auto out_dir = get<std::string>(cfg, "/out_dir");
  const auto out = get<std::string>(cfg, "/out");
  json doc{{"command", command}, {"config", cfg}};
  if (!out_dir.empty())
    write_text(fs::path(out_dir) / (command + ".config.json"), doc.dump(2) + "\n");
  else if (!out.empty())
    write_text(out + ".config.json", doc.dump(2) + "\n");
  else
    std::cerr << "resolved config: " << doc.dump() << "\n";
}

std::string fixed(double v, int digits = 6) { return eval_detail::fixed(v, digits); }

// ---------------------------------------------------------------- commands

int cmd_embed(const json& cfg) {
  const auto in = require_path(cfg, "in", "--in");
  const auto out = require_path(cfg, "out", "--out");
  const auto payload = payload_from(cfg, true);
  const auto grid = grid_from(cfg);
  write_sidecar("embed", cfg);
  const auto clip = load_wav(in);
  const auto key = WatermarkKey::with_default_band(get<std::uint64_t>(cfg, "/key_seed"), clip.sample_rate());
  double d = 0.0;
  if (!cfg.at("strength").is_null()) {
    d = get<double>(cfg, "/strength");
    if (!(d > 0.0 && d < 1.0)) throw UsageError("--strength must lie in (0, 1)");
  } else {
    const auto s = search_strength(clip, payload, key, grid);
    if (!s.success) {
      std::cout << "strength: FAILED\n";
      return 1;
    }
    d = s.strength;
  }
  save_wav(embed(clip, payload, key, d), out);
  std::cout << "strength: " << fixed(d, 4) << "\n";
  return 0;
}

int cmd_detect(const json& cfg) {
  const auto in = require_path(cfg, "in", "--in");
  std::optional<Payload> reference;
  if (!cfg.at("payload").is_null()) reference = payload_from(cfg, true);
  write_sidecar("detect", cfg);
  const auto clip = load_wav(in);
  const auto key = WatermarkKey::with_default_band(get<std::uint64_t>(cfg, "/key_seed"), clip.sample_rate());
  SpeedSearch speed;
  speed.enabled = get<bool>(cfg, "/speed_search");
  const auto r = detect(clip, key, reference ? &*reference : nullptr, {}, speed);
  if (!r.valid) throw Error(ErrorCode::kClipTooShort, "no detectable frames in " + in);
  std::cout << "payload: " << r.decoded_payload()->to_hex() << "\n";
  std::cout << "margins:";
  for (double m : r.per_bit_margin) std::cout << ' ' << fixed(m);
  std::cout << "\n";
  std::cout << "confidence: " << fixed(r.confidence) << "\n";
  std::cout << "speed: " << fixed(r.speed, 4) << "\n";
  if (reference) {
    std::cout << "score: " << fixed(*r.score) << "\n";
    std::cout << "bit_errors: " << r.bit_errors(*reference) << "\n";
    std::cout << "decision: " << (r.hard_decision ? "true" : "false") << "\n";
  } else {
    std::cout << "score: n/a\ndecision: n/a (no --payload)\n";
  }
  return 0;
}

int cmd_search(const json& cfg) {
  const auto in = require_path(cfg, "in", "--in");
  const auto payload = payload_from(cfg, true);
  const auto grid = grid_from(cfg);
  write_sidecar("search-strength", cfg);
  const auto clip = load_wav(in);
  const auto key = WatermarkKey::with_default_band(get<std::uint64_t>(cfg, "/key_seed"), clip.sample_rate());
  const auto s = search_strength(clip, payload, key, grid);
  if (!s.success) {
    std::cout << "FAILED\n";
    return 1;
  }
  std::cout << fixed(s.strength, 4) << "\n";
  return 0;
}

int cmd_augment(const json& cfg) {
  const auto in = require_path(cfg, "in", "--in");
  const auto out = require_path(cfg, "out", "--out");
  const auto conditions = conditions_from(cfg);
  if (conditions.size() != 1) throw UsageError("augment takes exactly one condition");
  write_sidecar("augment", cfg);
  const auto clip = load_wav(in);
  const auto noise = noise_from(cfg, clip.sample_rate());
  const auto applied = apply_condition_detailed(clip, conditions.front(), &noise, get<std::uint64_t>(cfg, "/seed"));
  save_wav(applied.clip, out);
  std::cout << "condition: " << to_string(conditions.front()) << "\nfactor: " << fixed(applied.factor, 6)
            << "\nnoise: " << (applied.noise_path.empty() ? "none" : applied.noise_path) << "\n";
  return 0;
}

void write_report_files(const EvalReport& report, const fs::path& dir) {
  std::ostringstream csv, rounds, md;
  write_csv(csv, report);
  write_rounds_csv(rounds, report);
  write_markdown(md, report);
  write_text(dir / "report.csv", csv.str());
  write_text(dir / "rounds.csv", rounds.str());
  write_text(dir / "report.md", md.str());
}

int cmd_eval(const json& cfg) {
  const auto out_dir = require_path(cfg, "out_dir", "--out-dir");
  const auto conditions = conditions_from(cfg);
  const auto mode = get<std::string>(cfg, "/eval/mode");
  const auto rounds = get<std::size_t>(cfg, "/rounds");
  const auto seed = get<std::uint64_t>(cfg, "/seed");
  const auto jobs = get<std::size_t>(cfg, "/jobs");
  if (rounds == 0 || jobs == 0) throw UsageError("--rounds and --jobs must be >= 1");
  if (mode != "patchwork" && mode != "detector") throw UsageError("eval mode must be 'patchwork' or 'detector'");

  EvalReport report(conditions);
  if (mode == "patchwork") {
    const auto payload = payload_from(cfg, false);
    const auto grid = grid_from(cfg);
    write_sidecar("eval", cfg);
    const int sr = get<int>(cfg, "/eval/sample_rate");
    const auto clips = test_clips(cfg, sr);
    const auto noise = noise_from(cfg, clips.front().sample_rate());
    PatchworkEvalOptions opt;
    opt.grid = grid;
    opt.speed.enabled = get<bool>(cfg, "/speed_search");
    opt.rounds = rounds;
    opt.seed = seed;
    opt.jobs = jobs;
    const auto key = WatermarkKey::with_default_band(get<std::uint64_t>(cfg, "/key_seed"), clips.front().sample_rate());
    report = evaluate_patchwork(clips, payload, key, conditions, &noise, opt);
  } else {
    const auto checkpoint = get<std::string>(cfg, "/eval/checkpoint");
    if (checkpoint.empty()) throw UsageError("detector evaluation needs eval.checkpoint");
    const auto exp = experiment_from(cfg);
    write_sidecar("eval", cfg);
    std::ifstream is(checkpoint);
    if (!is) throw Error(ErrorCode::kFileNotFound, checkpoint);
    json ck;
    try {
      is >> ck;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, checkpoint + ": " + e.what());
    }
    toy::ToyGenerator g(exp.train.generator, 0);
    toy::ToyDetector wm(exp.train.detector, 0);
    toy::load_parameters(g, ck.at("generator"));
    toy::load_parameters(wm, ck.at("detector"));
    auto real = test_clips(cfg, exp.train.generator.sample_rate);
    for (auto& c : real) {
      std::vector<double> x(c.samples().begin(), c.samples().end());
      x.resize(x.size() / exp.train.generator.hop * exp.train.generator.hop);
      c = AudioClip(std::move(x), c.sample_rate());
    }
    const auto generated = toy::vocode(g, real, exp.train.generator);
    const auto noise = noise_from(cfg, exp.train.generator.sample_rate);
    const auto frozen = wm.frozen();
    ScoreFn score = [&frozen](const AudioClip& c) { return frozen.score(c.samples()); };
    RowKey key{std::string("toy-") + to_string(exp.train.detector.frontend), "checkpoint", ck.value("augment", false) ? "s+n" : "none",
               ck.value("role", std::string("unknown"))};
    report = evaluate_detector(score, real, generated, conditions, &noise, key, {{}, rounds, seed, jobs});
  }
  write_report_files(report, out_dir);
  write_markdown(std::cout, report);
  return 0;
}

int cmd_train_toy(const json& cfg) {
  const auto out_dir = require_path(cfg, "out_dir", "--out-dir");
  const auto exp = experiment_from(cfg);
  write_sidecar("train-toy", cfg);
  const auto result = toy::run_experiment(exp, fs::path(out_dir), [](const toy::RunResult& r) {
    const auto& cells = r.report.rows().front().cells;
    std::cerr << r.spec.name() << ": steps " << r.log.size() << ", EER clean " << fixed(cells.at(Condition::kClean).mean, 4)
              << ", noise " << fixed(cells.at(Condition::kNoise).mean, 4) << "\n";
  });
  toy::write_experiment_reports(result, out_dir);
  std::ifstream md(fs::path(out_dir) / "table.md");
  std::cout << md.rdbuf();
  return 0;
}

int cmd_report(const json& cfg) {
  const auto out_dir = require_path(cfg, "out_dir", "--out-dir");
  const auto exp = experiment_from(cfg);
  const auto result = toy::load_experiment(out_dir, exp.train);
  toy::write_experiment_reports(result, out_dir);
  std::ifstream md(fs::path(out_dir) / "table.md");
  std::cout << md.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative watermarking toolkit"};
  app.require_subcommand(1);
  std::vector<Command> commands;
  commands.reserve(7);
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    commands.push_back({name, app.add_subcommand(name, help), {}, {}});
    auto& c = commands.back();
    c.app->add_option("--config", c.config_path, "JSON file with settings; flags take precedence");
    c.bind<std::string>("--out-dir", "/out_dir", "Directory for reports, checkpoints and the config sidecar");
    return c;
  };

  auto& embed_cmd = add("embed", "Embed a 128-bit payload into a WAV file");
  embed_cmd.bind<std::string>("--in", "/in", "Input WAV");
  embed_cmd.bind<std::string>("--out", "/out", "Output WAV");
  embed_cmd.bind<std::uint64_t>("--key-seed", "/key_seed", "Watermark key seed");
  embed_cmd.bind<std::string>("--payload", "/payload", "32 hex digits");
  embed_cmd.bind<double>("--strength", "/strength", "Fixed strength d; searched on the grid when omitted");
  embed_cmd.bind<double>("--grid-min", "/grid/min", "Smallest strength tried");
  embed_cmd.bind<double>("--grid-max", "/grid/max", "Largest strength tried");
  embed_cmd.bind<double>("--grid-step", "/grid/step", "Strength grid spacing");

  auto& detect_cmd = add("detect", "Decode the payload from a WAV file");
  detect_cmd.bind<std::string>("--in", "/in", "Input WAV");
  detect_cmd.bind<std::uint64_t>("--key-seed", "/key_seed", "Watermark key seed");
  detect_cmd.bind<std::string>("--payload", "/payload", "Reference payload for the score and decision");
  detect_cmd.bind_flag("--no-speed-search", "/speed_search", false, "Skip playback-speed compensation");

  auto& search_cmd = add("search-strength", "Smallest strength that round-trips the payload");
  search_cmd.bind<std::string>("--in", "/in", "Input WAV");
  search_cmd.bind<std::uint64_t>("--key-seed", "/key_seed", "Watermark key seed");
  search_cmd.bind<std::string>("--payload", "/payload", "32 hex digits");
  search_cmd.bind<double>("--grid-min", "/grid/min", "Smallest strength tried");
  search_cmd.bind<double>("--grid-max", "/grid/max", "Largest strength tried");
  search_cmd.bind<double>("--grid-step", "/grid/step", "Strength grid spacing");

  auto& augment_cmd = add("augment", "Apply one channel condition to a WAV file");
  augment_cmd.bind<std::string>("--in", "/in", "Input WAV");
  augment_cmd.bind<std::string>("--out", "/out", "Output WAV");
  augment_cmd.bind_list("--conditions", "/conditions", "One of clean, stretch, noise, s+n");
  augment_cmd.bind<std::uint64_t>("--seed", "/seed", "Random seed");
  augment_cmd.bind<std::string>("--noise", "/noise", "Noise manifest (JSONL); synthetic noise when omitted");

  auto& eval_cmd = add("eval", "Evaluate patchwork or a trained toy detector under channel conditions");
  eval_cmd.bind<std::uint64_t>("--key-seed", "/key_seed", "Watermark key seed");
  eval_cmd.bind<std::string>("--payload", "/payload", "32 hex digits; random from --seed when omitted");
  eval_cmd.bind<double>("--grid-min", "/grid/min", "Smallest strength tried");
  eval_cmd.bind<double>("--grid-max", "/grid/max", "Largest strength tried");
  eval_cmd.bind<double>("--grid-step", "/grid/step", "Strength grid spacing");
  eval_cmd.bind_list("--conditions", "/conditions", "Comma-separated conditions");
  eval_cmd.bind<std::size_t>("--rounds", "/rounds", "Evaluation rounds");
  eval_cmd.bind<std::uint64_t>("--seed", "/seed", "Random seed");
  eval_cmd.bind<std::size_t>("--jobs", "/jobs", "Worker threads");
  eval_cmd.bind<std::string>("--manifest", "/manifest", "Corpus manifest (JSONL); synthetic corpus when omitted");
  eval_cmd.bind<std::string>("--noise", "/noise", "Noise manifest (JSONL)");
  eval_cmd.bind<std::size_t>("--utterances", "/eval/utterances", "Synthetic corpus size");
  eval_cmd.bind<std::string>("--mode", "/eval/mode", "patchwork or detector");
  eval_cmd.bind<std::string>("--checkpoint", "/eval/checkpoint", "Toy checkpoint for detector mode");

  auto& train_cmd = add("train-toy", "Train and evaluate observer and collaborator toy detectors");
  train_cmd.bind<std::size_t>("--steps", "/toy/steps", "Training steps per run");
  train_cmd.bind_list("--roles", "/toy/roles", "Comma-separated roles");
  train_cmd.bind<std::size_t>("--rounds", "/toy/eval_rounds", "Evaluation rounds per run");
  train_cmd.bind<std::size_t>("--jobs", "/jobs", "Evaluation threads");
  {
    auto seed = std::make_shared<std::uint64_t>();
    auto* opt = train_cmd.app->add_option("--seed", *seed, "Run a single seed instead of the configured list");
    train_cmd.bindings.push_back({opt, [seed](json& j) { j["toy"]["seeds"] = {*seed}; }});
  }

  add("report", "Rebuild the median table from finished train-toy runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      const auto cfg = c.resolve();
      if (c.name == "embed") return cmd_embed(cfg);
      if (c.name == "detect") return cmd_detect(cfg);
      if (c.name == "search-strength") return cmd_search(cfg);
      if (c.name == "augment") return cmd_augment(cfg);
      if (c.name == "eval") return cmd_eval(cfg);
      if (c.name == "train-toy") return cmd_train_toy(cfg);
      if (c.name == "report") return cmd_report(cfg);
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return 2;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
