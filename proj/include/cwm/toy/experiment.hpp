#pragma once

// Paired observer/collaborator training runs on the toy corpus, each with and
// without stretch+noise augmentation, evaluated like the detector table.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cwm/eval.hpp"
#include "cwm/toy/train.hpp"

namespace cwm::toy {

struct ExperimentConfig {
  TrainConfig train;  // role, augment and seed are overridden per run
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<Role> roles{Role::kCollaborator, Role::kObserver};
  std::vector<bool> augment{false, true};
  std::size_t utterances = 200;
  double seconds = 2.0;
  std::uint64_t corpus_seed = 7;
  std::size_t noise_clips = 30;
  std::uint64_t noise_seed = 11;
  std::size_t eval_rounds = 3;
  ConditionParams eval_condition{0.9, 1.1, 10.0, std::nullopt, Split::kTest};
  std::size_t jobs = 1;
  std::size_t checkpoint_every = 250;  // only used with a work directory
};

struct RunSpec {
  Role role = Role::kCollaborator;
  bool augment = false;
  std::uint64_t seed = 0;

  std::string augmentation() const { return augment ? "s+n" : "none"; }
  std::string name() const {
    return std::string(to_string(role)) + "-" + (augment ? "sn" : "none") + "-seed" + std::to_string(seed);
  }
};

struct RunResult {
  RunSpec spec;
  std::vector<StepLog> log;
  EvalReport report;  // one row, one cell per condition, one value per round
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  EvalReport per_seed;  // one row per (role, augmentation); each value is one seed's mean EER
  EvalReport table;     // same rows; each cell holds the median over seeds

  double median(Role role, bool augment, Condition c) const;
};

inline double median_of(std::vector<double> v) {
  require(!v.empty(), ErrorCode::kInvalidArgument, "median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline RowKey experiment_key(const TrainConfig& train, Role role, bool augment) {
  return {std::string("toy-") + to_string(train.detector.frontend), "scratch", augment ? "s+n" : "none",
          to_string(role)};
}

inline double ExperimentResult::median(Role role, bool augment, Condition c) const {
  for (const auto& row : table.rows())
    if (row.key.role == to_string(role) && row.key.augmentation == (augment ? "s+n" : "none"))
      return row.cells.at(c).mean;
  throw Error(ErrorCode::kInvalidArgument, "experiment has no such row");
}

/// Shared data for every run: the toy corpus and a synthetic noise corpus.
struct ExperimentData {
  ToyCorpus corpus;
  NoiseCorpus noise;
  std::vector<AudioClip> train;
  std::vector<AudioClip> test;

  explicit ExperimentData(const ExperimentConfig& cfg)
      : corpus(synth_toy_corpus(cfg.utterances, cfg.seconds, cfg.train.generator.sample_rate, cfg.corpus_seed)),
        noise(NoiseCorpus::synthetic(cfg.noise_clips, cfg.train.generator.sample_rate, 3.0, cfg.noise_seed)),
        train(corpus.split(Split::kTrain)),
        test(corpus.split(Split::kTest)) {
    require(!train.empty() && !test.empty(), ErrorCode::kEmptySplit, "toy corpus needs train and test clips");
    const std::size_t hop = cfg.train.generator.hop;
    for (auto& c : test) {
      std::vector<double> x(c.samples().begin(), c.samples().end());
      x.resize(x.size() / hop * hop);
      c = AudioClip(std::move(x), c.sample_rate());
    }
  }
};

/// Vocodes every test clip from its own conditioning features.
inline std::vector<AudioClip> vocode(const ToyGenerator& g, const std::vector<AudioClip>& clips,
                                     const GeneratorConfig& cfg) {
  std::vector<AudioClip> out;
  for (const auto& c : clips) {
    const auto y = g.frozen()(conditioning_mel(c.samples(), cfg));
    out.emplace_back(y.value(), c.sample_rate());
  }
  return out;
}

inline EvalReport evaluate_run(const Trainer& trainer, const ExperimentData& data, const ExperimentConfig& cfg,
                               const RunSpec& spec) {
  const auto generated = vocode(trainer.generator(), data.test, trainer.config().generator);
  const auto wm = trainer.detector().frozen();
  ScoreFn score = [&wm](const AudioClip& clip) { return wm.score(clip.samples()); };
  DetectorEvalOptions opt{cfg.eval_condition, cfg.eval_rounds, mix_seed(spec.seed, 0x6576616c), cfg.jobs};
  return evaluate_detector(score, data.test, generated, {kAllConditions.begin(), kAllConditions.end()}, &data.noise,
                           experiment_key(trainer.config(), spec.role, spec.augment), opt);
}

// ------------------------------------------------------------- run storage

namespace experiment_detail {

inline const char* kLogHeader = "step,kind,loss_d,adv,fm,mel,wm,lr";

inline std::string log_line(const StepLog& s) {
  std::ostringstream os;
  os.precision(17);
  os << s.step << ',' << (s.d_step ? "d" : "g") << ',' << s.loss_d << ',' << s.adv << ',' << s.fm << ',' << s.mel
     << ',' << s.wm << ',' << s.lr;
  return os.str();
}

inline StepLog parse_log_line(const std::string& line) {
  std::istringstream is(line);
  std::string f;
  std::vector<std::string> fields;
  while (std::getline(is, f, ',')) fields.push_back(f);
  require(fields.size() == 8, ErrorCode::kParse, "bad loss log line: " + line);
  StepLog s;
  s.step = std::stoull(fields[0]);
  s.d_step = fields[1] == "d";
  s.loss_d = std::stod(fields[2]);
  s.adv = std::stod(fields[3]);
  s.fm = std::stod(fields[4]);
  s.mel = std::stod(fields[5]);
  s.wm = std::stod(fields[6]);
  s.lr = std::stod(fields[7]);
  return s;
}

/// Loss log entries up to and including `step`; later lines belong to an
/// interrupted run and are dropped.
inline std::vector<StepLog> read_log(const std::filesystem::path& path, std::size_t step) {
  std::vector<StepLog> out;
  std::ifstream is(path);
  if (!is) return out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto s = parse_log_line(line);
    if (s.step <= step) out.push_back(s);
  }
  return out;
}

inline void write_log(const std::filesystem::path& path, const std::vector<StepLog>& log) {
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), ErrorCode::kWriteFailed, "cannot write " + path.string());
  os << kLogHeader << '\n';
  for (const auto& s : log) os << log_line(s) << '\n';
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows()) {
    nlohmann::json cells = nlohmann::json::object();
    for (const auto& [c, cell] : row.cells) cells[to_string(c)] = cell.rounds;
    rows.push_back({{"system", row.key.system},
                    {"training", row.key.training},
                    {"augmentation", row.key.augmentation},
                    {"role", row.key.role},
                    {"rounds", cells}});
  }
  return rows;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& row : j) {
    ReportRow out{{row.at("system"), row.at("training"), row.at("augmentation"), row.at("role")}, {}};
    for (auto c : kAllConditions) out.cells[c].rounds = row.at("rounds").at(to_string(c)).get<std::vector<double>>();
    r.add_row(std::move(out));
  }
  return r;
}

}  // namespace experiment_detail

/// Trains one configuration. With a work directory the run checkpoints every
/// `checkpoint_every` steps, appends to loss.csv, and resumes from the last
/// checkpoint; a finished run is read back from result.json.
inline RunResult run_one(const ExperimentConfig& cfg, const ExperimentData& data, const RunSpec& spec,
                         const std::optional<std::filesystem::path>& dir = std::nullopt) {
  namespace fs = std::filesystem;
  namespace ed = experiment_detail;
  TrainConfig tc = cfg.train;
  tc.role = spec.role;
  tc.augment = spec.augment;
  tc.seed = spec.seed;
  RunResult result{spec, {}, EvalReport{}};

  if (dir && fs::exists(*dir / "result.json")) {
    std::ifstream is(*dir / "result.json");
    nlohmann::json j;
    is >> j;
    if (j.value("steps", std::size_t{0}) == tc.steps) {
      result.report = ed::report_from_json(j.at("report"));
      result.log = ed::read_log(*dir / "loss.csv", tc.steps);
      return result;
    }
  }

  Trainer trainer(tc, data.train, &data.noise);
  std::ofstream log_stream;
  if (dir) {
    fs::create_directories(*dir);
    const auto ckpt = *dir / "checkpoint.json";
    if (fs::exists(ckpt)) trainer.load_checkpoint(ckpt);
    require(trainer.step_count() <= tc.steps, ErrorCode::kInvalidArgument,
            "checkpoint in " + dir->string() + " is past the configured step count");
    result.log = ed::read_log(*dir / "loss.csv", trainer.step_count());
    ed::write_log(*dir / "loss.csv", result.log);
    log_stream.open(*dir / "loss.csv", std::ios::app);
    if (trainer.step_count() == 0) trainer.save_checkpoint(ckpt);
  }
  while (trainer.step_count() < tc.steps) {
    auto s = trainer.step();
    result.log.push_back(s);
    if (dir) {
      log_stream << ed::log_line(s) << '\n';
      if (s.step % cfg.checkpoint_every == 0 || s.step == tc.steps) {
        log_stream.flush();
        trainer.save_checkpoint(*dir / "checkpoint.json");
      }
    }
  }
  result.report = evaluate_run(trainer, data, cfg, spec);
  if (dir) {
    const auto tmp = *dir / "result.json.tmp";
    {
      std::ofstream os(tmp);
      os << nlohmann::json{{"steps", tc.steps},
                           {"run", spec.name()},
                           {"role", to_string(spec.role)},
                           {"augment", spec.augment},
                           {"seed", spec.seed},
                           {"report", ed::report_to_json(result.report)}}
                .dump(2);
    }
    fs::rename(tmp, *dir / "result.json");
  }
  return result;
}

/// Median and per-seed tables over a set of finished runs.
inline void summarize(ExperimentResult& out, const ExperimentConfig& cfg) {
  out.per_seed = EvalReport{};
  out.table = EvalReport{};
  for (auto role : cfg.roles)
    for (bool aug : cfg.augment) {
      ReportRow seeds{experiment_key(cfg.train, role, aug), {}};
      for (const auto& r : out.runs)
        if (r.spec.role == role && r.spec.augment == aug)
          for (const auto& [c, cell] : r.report.rows().front().cells) seeds.cells[c].rounds.push_back(cell.mean);
      if (seeds.cells.empty()) continue;
      ReportRow median{seeds.key, {}};
      for (const auto& [c, cell] : seeds.cells) median.cells[c].rounds = {median_of(cell.rounds)};
      out.per_seed.add_row(std::move(seeds));
      out.table.add_row(std::move(median));
    }
}

using RunCallback = std::function<void(const RunResult&)>;

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::optional<std::filesystem::path>& work_dir = std::nullopt,
                                       const RunCallback& on_run = {}) {
  require(!cfg.seeds.empty() && !cfg.roles.empty() && !cfg.augment.empty(), ErrorCode::kInvalidArgument,
          "experiment needs at least one seed, role and augmentation setting");
  cfg.train.validate();
  const ExperimentData data(cfg);
  ExperimentResult out;
  for (auto seed : cfg.seeds)
    for (auto role : cfg.roles)
      for (bool aug : cfg.augment) {
        RunSpec spec{role, aug, seed};
        std::optional<std::filesystem::path> dir;
        if (work_dir) dir = *work_dir / spec.name();
        out.runs.push_back(run_one(cfg, data, spec, dir));
        if (on_run) on_run(out.runs.back());
      }
  summarize(out, cfg);
  return out;
}

/// Reads every finished run (a subdirectory holding result.json) back from a
/// work directory, ordered as run_experiment produces them.
inline ExperimentResult load_experiment(const std::filesystem::path& work_dir, const TrainConfig& train = {}) {
  namespace fs = std::filesystem;
  require(fs::is_directory(work_dir), ErrorCode::kFileNotFound, work_dir.string());
  ExperimentResult out;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(work_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "result.json")) dirs.push_back(entry.path());
  require(!dirs.empty(), ErrorCode::kFileNotFound, "no finished runs under " + work_dir.string());
  for (const auto& d : dirs) {
    std::ifstream is(d / "result.json");
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, (d / "result.json").string() + ": " + e.what());
    }
    RunSpec spec{parse_role(j.at("role")), j.at("augment").get<bool>(), j.at("seed").get<std::uint64_t>()};
    out.runs.push_back({spec, experiment_detail::read_log(d / "loss.csv", j.at("steps").get<std::size_t>()),
                        experiment_detail::report_from_json(j.at("report"))});
  }
  auto rank = [](const RunSpec& s) { return std::make_tuple(s.seed, s.role == Role::kObserver, s.augment); };
  std::sort(out.runs.begin(), out.runs.end(), [&](const auto& a, const auto& b) { return rank(a.spec) < rank(b.spec); });
  ExperimentConfig cfg;
  cfg.train = train;
  summarize(out, cfg);
  return out;
}

/// table.md / table.csv hold medians over seeds; seeds.csv has one line per
/// run and condition.
inline void write_experiment_reports(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::trunc);
    require(static_cast<bool>(os), ErrorCode::kWriteFailed, (dir / name).string());
    return os;
  };
  {
    auto os = open("table.md");
    os << "EER (%), median over " << (r.per_seed.rows().empty() ? 0 : r.per_seed.rows().front().cells.begin()->second.rounds.size())
       << " seeds\n\n";
    write_markdown(os, r.table);
  }
  {
    auto os = open("table.csv");
    write_csv(os, r.table);
  }
  {
    auto os = open("seeds.csv");
    os << "role,augmentation,seed,condition,eer\n";
    for (const auto& run : r.runs)
      for (const auto& [c, cell] : run.report.rows().front().cells)
        os << to_string(run.spec.role) << ',' << run.spec.augmentation() << ',' << run.spec.seed << ','
           << to_string(c) << ',' << eval_detail::fixed(cell.mean) << '\n';
  }
}

}  // namespace cwm::toy
