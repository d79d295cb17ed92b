#pragma once

// Multi-condition evaluation: patchwork error rates and detector EERs,
// averaged over independent rounds, reported as CSV and markdown.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cwm/augment.hpp"
#include "cwm/metrics.hpp"
#include "cwm/patchwork.hpp"

namespace cwm {

struct RowKey {
  std::string system;
  std::string training;
  std::string augmentation;
  std::string role;

  friend auto operator<=>(const RowKey&, const RowKey&) = default;
};

struct ReportCell {
  double mean = 0.0;
  std::vector<double> rounds;
};

struct ReportRow {
  RowKey key;
  std::map<Condition, ReportCell> cells;
};

class EvalReport {
 public:
  explicit EvalReport(std::vector<Condition> conditions = {kAllConditions.begin(), kAllConditions.end()})
      : conditions_(std::move(conditions)) {}

  const std::vector<Condition>& conditions() const noexcept { return conditions_; }
  const std::vector<ReportRow>& rows() const noexcept { return rows_; }

  /// Adds a row; every condition must carry the same number of rounds.
  void add_row(ReportRow row) {
    std::size_t rounds = 0;
    for (auto c : conditions_) {
      auto it = row.cells.find(c);
      require(it != row.cells.end(), ErrorCode::kInvalidArgument, std::string("row lacks condition ") + to_string(c));
      auto& cell = it->second;
      require(!cell.rounds.empty(), ErrorCode::kInvalidArgument, "cell without rounds");
      require(rounds == 0 || cell.rounds.size() == rounds, ErrorCode::kInvalidArgument, "uneven round counts");
      rounds = cell.rounds.size();
      double acc = 0.0;
      for (double v : cell.rounds) acc += v;
      cell.mean = acc / static_cast<double>(cell.rounds.size());
    }
    rows_.push_back(std::move(row));
  }

  void append(const EvalReport& other) {
    for (const auto& r : other.rows_) add_row(r);
  }

  const ReportRow* find(const RowKey& key) const {
    for (const auto& r : rows_)
      if (r.key == key) return &r;
    return nullptr;
  }

  double mean(const RowKey& key, Condition c) const {
    const auto* row = find(key);
    require(row != nullptr, ErrorCode::kInvalidArgument, "no such report row");
    return row->cells.at(c).mean;
  }

 private:
  std::vector<Condition> conditions_;
  std::vector<ReportRow> rows_;
};

namespace eval_detail {

inline std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace eval_detail

/// One line per row: key columns then the mean of each condition.
inline void write_csv(std::ostream& os, const EvalReport& report) {
  os << "system,training,augmentation,role";
  for (auto c : report.conditions()) os << ',' << to_string(c);
  os << '\n';
  for (const auto& row : report.rows()) {
    os << row.key.system << ',' << row.key.training << ',' << row.key.augmentation << ',' << row.key.role;
    for (auto c : report.conditions()) os << ',' << eval_detail::fixed(row.cells.at(c).mean);
    os << '\n';
  }
}

/// Long format: one line per row, condition and round.
inline void write_rounds_csv(std::ostream& os, const EvalReport& report) {
  os << "system,training,augmentation,role,condition,round,value\n";
  for (const auto& row : report.rows())
    for (auto c : report.conditions()) {
      const auto& cell = row.cells.at(c);
      for (std::size_t r = 0; r < cell.rounds.size(); ++r)
        os << row.key.system << ',' << row.key.training << ',' << row.key.augmentation << ',' << row.key.role << ','
           << to_string(c) << ',' << r << ',' << eval_detail::fixed(cell.rounds[r]) << '\n';
    }
}

/// Percentages with two decimals, one table row per report row.
inline void write_markdown(std::ostream& os, const EvalReport& report) {
  os << "| System | Training | Augmentation | Role |";
  for (auto c : report.conditions()) os << ' ' << to_string(c) << " |";
  os << "\n|---|---|---|---|";
  for (std::size_t i = 0; i < report.conditions().size(); ++i) os << "---:|";
  os << '\n';
  for (const auto& row : report.rows()) {
    os << "| " << row.key.system << " | " << row.key.training << " | " << row.key.augmentation << " | " << row.key.role
       << " |";
    for (auto c : report.conditions()) os << ' ' << eval_detail::fixed(100.0 * row.cells.at(c).mean, 2) << " |";
    os << '\n';
  }
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
/// to per-index slots so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

struct PatchworkEvalOptions {
  StrengthGrid grid;
  PatchworkConfig config;
  SpeedSearch speed{true};
  ConditionParams condition;
  std::size_t rounds = 20;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct PatchworkEvalDetail {
  std::vector<StrengthResult> strengths;  // per utterance
  EvalReport report;
};

/// Per utterance: strength search on the clean signal, embed at the chosen
/// strength, then for every round and condition distort, detect, and count
/// the utterance as an error unless all 128 bits decode. The report carries
/// an utterance-error row and a bit-error row.
inline PatchworkEvalDetail evaluate_patchwork_detailed(const std::vector<AudioClip>& utterances, const Payload& payload,
                                                       const WatermarkKey& key, const std::vector<Condition>& conditions,
                                                       const NoiseCorpus* noise, const PatchworkEvalOptions& opt = {}) {
  require(!utterances.empty(), ErrorCode::kInvalidArgument, "no test utterances");
  require(opt.rounds >= 1, ErrorCode::kInvalidArgument, "rounds must be >= 1");
  const std::size_t n = utterances.size();
  PatchworkEvalDetail out{std::vector<StrengthResult>(n), EvalReport(conditions)};
  std::vector<AudioClip> marked(n);
  parallel_for(n, opt.jobs, [&](std::size_t i) {
    out.strengths[i] = search_strength(utterances[i], payload, key, opt.grid, opt.config);
    marked[i] = embed(utterances[i], payload, key, out.strengths[i].strength, opt.config);
  });

  const std::size_t cases = opt.rounds * conditions.size() * n;
  std::vector<std::size_t> bit_errors(cases);
  parallel_for(cases, opt.jobs, [&](std::size_t idx) {
    const std::size_t i = idx % n, c = (idx / n) % conditions.size(), r = idx / (n * conditions.size());
    const auto seed = mix_seed(opt.seed, (r * 16 + static_cast<std::size_t>(conditions[c])) * 1000003 + i);
    const auto received = apply_condition(marked[i], conditions[c], noise, seed, opt.condition);
    bit_errors[idx] = detect(received, key, &payload, opt.config, opt.speed).bit_errors(payload);
  });

  ReportRow utt{{"patchwork", "dsp", "none", "utterance-error"}, {}};
  ReportRow bits{{"patchwork", "dsp", "none", "bit-error"}, {}};
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    auto& ucell = utt.cells[conditions[c]];
    auto& bcell = bits.cells[conditions[c]];
    for (std::size_t r = 0; r < opt.rounds; ++r) {
      std::size_t failed = 0, errors = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto e = bit_errors[(r * conditions.size() + c) * n + i];
        failed += e > 0;
        errors += e;
      }
      ucell.rounds.push_back(static_cast<double>(failed) / static_cast<double>(n));
      bcell.rounds.push_back(static_cast<double>(errors) / static_cast<double>(n * kPayloadBits));
    }
  }
  out.report.add_row(std::move(utt));
  out.report.add_row(std::move(bits));
  return out;
}

inline EvalReport evaluate_patchwork(const std::vector<AudioClip>& utterances, const Payload& payload,
                                     const WatermarkKey& key, const std::vector<Condition>& conditions,
                                     const NoiseCorpus* noise, const PatchworkEvalOptions& opt = {}) {
  return evaluate_patchwork_detailed(utterances, payload, key, conditions, noise, opt).report;
}

/// Loads the test split of `manifest` (WAV paths) and evaluates it.
inline EvalReport evaluate_patchwork(const CorpusManifest& manifest, const Payload& payload, const WatermarkKey& key,
                                     const std::vector<Condition>& conditions, const NoiseCorpus* noise,
                                     const PatchworkEvalOptions& opt = {}) {
  std::vector<AudioClip> clips;
  for (const auto& path : manifest.paths(Split::kTest)) clips.push_back(load_wav(path));
  require(!clips.empty(), ErrorCode::kEmptySplit, "manifest has no test records");
  return evaluate_patchwork(clips, payload, key, conditions, noise, opt);
}

using ScoreFn = std::function<double(const AudioClip&)>;

struct DetectorEvalOptions {
  ConditionParams condition;
  std::size_t rounds = 20;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Both classes go through the same channel; natural clips are the positive
/// class. Each cell is the EER of one round, averaged over rounds.
inline EvalReport evaluate_detector(const ScoreFn& score, const std::vector<AudioClip>& real,
                                    const std::vector<AudioClip>& generated, const std::vector<Condition>& conditions,
                                    const NoiseCorpus* noise, const RowKey& key, const DetectorEvalOptions& opt = {}) {
  require(!real.empty() && !generated.empty(), ErrorCode::kInvalidArgument, "both clip sets must be non-empty");
  require(opt.rounds >= 1, ErrorCode::kInvalidArgument, "rounds must be >= 1");
  const std::size_t per_round = real.size() + generated.size();
  const std::size_t cases = opt.rounds * conditions.size() * per_round;
  std::vector<double> scores(cases);
  parallel_for(cases, opt.jobs, [&](std::size_t idx) {
    const std::size_t i = idx % per_round, c = (idx / per_round) % conditions.size();
    const std::size_t r = idx / (per_round * conditions.size());
    const auto& clip = i < real.size() ? real[i] : generated[i - real.size()];
    const auto seed = mix_seed(opt.seed, (r * 16 + static_cast<std::size_t>(conditions[c])) * 1000003 + i);
    scores[idx] = score(apply_condition(clip, conditions[c], noise, seed, opt.condition));
  });
  EvalReport report(conditions);
  ReportRow row{key, {}};
  for (std::size_t c = 0; c < conditions.size(); ++c)
    for (std::size_t r = 0; r < opt.rounds; ++r) {
      const auto base = scores.begin() + static_cast<std::ptrdiff_t>((r * conditions.size() + c) * per_round);
      ScoreSet set{{base, base + static_cast<std::ptrdiff_t>(real.size())},
                   {base + static_cast<std::ptrdiff_t>(real.size()), base + static_cast<std::ptrdiff_t>(per_round)}};
      row.cells[conditions[c]].rounds.push_back(eer(set).eer);
    }
  report.add_row(std::move(row));
  return report;
}

}  // namespace cwm
