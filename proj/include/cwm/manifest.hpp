#pragma once

// Corpus manifests: records with a train/val/test label, stored as JSONL.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cwm/error.hpp"
#include "cwm/random.hpp"

namespace cwm {

enum class Split { kTrain, kVal, kTest };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kParse, "unknown split '" + s + "'");
}

struct ManifestRecord {
  std::string path;
  Split split = Split::kTrain;
  std::optional<std::string> group;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

struct CorpusManifest {
  std::vector<ManifestRecord> records;

  std::vector<std::string> paths(Split s) const {
    std::vector<std::string> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(r.path);
    return out;
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [s](const auto& r) { return r.split == s; }));
  }

  friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

namespace manifest_detail {

inline std::array<std::size_t, 3> targets(std::size_t n, const SplitRatios& r) {
  const double total = r.train + r.val + r.test;
  const auto n_train = static_cast<std::size_t>(std::lround(n * r.train / total));
  const auto n_val = static_cast<std::size_t>(std::lround(n * r.val / total));
  return {n_train, n_val, n - std::min(n, n_train + n_val)};
}

}  // namespace manifest_detail

/// Deterministic shuffled split. When `groups` is given (one id per path) every
/// group lands in exactly one split.
inline CorpusManifest split_manifest(const std::vector<std::string>& paths, std::uint64_t seed,
                                     const SplitRatios& ratios = {},
                                     const std::vector<std::string>* groups = nullptr) {
  require(paths.size() >= 10, ErrorCode::kInvalidArgument, "split_manifest needs at least 10 paths");
  require(!groups || groups->size() == paths.size(), ErrorCode::kInvalidArgument, "one group id per path");
  const auto target = manifest_detail::targets(paths.size(), ratios);
  Rng rng(seed);
  CorpusManifest m;
  constexpr std::array<Split, 3> kOrder{Split::kTrain, Split::kVal, Split::kTest};

  if (!groups) {
    std::vector<std::size_t> idx(paths.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle(idx, rng);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < target[s]; ++k, ++pos) m.records.push_back({paths[idx[pos]], kOrder[s], {}});
    return m;
  }

  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < paths.size(); ++i) members[(*groups)[i]].push_back(i);
  std::vector<std::string> ids;
  for (const auto& [id, _] : members) ids.push_back(id);
  shuffle(ids, rng);
  // largest groups first so the small splits are filled by small groups
  std::stable_sort(ids.begin(), ids.end(),
                   [&](const auto& a, const auto& b) { return members[a].size() > members[b].size(); });
  const std::size_t smallest = std::min({target[0], target[1], target[2]});
  require(members[ids.front()].size() <= std::max<std::size_t>(smallest, 1), ErrorCode::kInvalidArgument,
          "group '" + ids.front() + "' is larger than the smallest split");
  std::array<std::size_t, 3> filled{0, 0, 0};
  for (const auto& id : ids) {
    const auto size = static_cast<std::ptrdiff_t>(members[id].size());
    std::size_t best = 0;
    std::ptrdiff_t best_room = std::numeric_limits<std::ptrdiff_t>::min();
    for (std::size_t s = 0; s < 3; ++s) {
      auto room = static_cast<std::ptrdiff_t>(target[s]) - static_cast<std::ptrdiff_t>(filled[s]);
      // prefer a split the group fits into, then the one furthest from its target
      auto key = (room >= size ? room : room - static_cast<std::ptrdiff_t>(paths.size()));
      if (key > best_room) best_room = key, best = s;
    }
    filled[best] += members[id].size();
    for (auto i : members[id]) m.records.push_back({paths[i], kOrder[best], id});
  }
  for (std::size_t s = 0; s < 3; ++s)
    require(filled[s] > 0, ErrorCode::kInvalidArgument, std::string("split ") + to_string(kOrder[s]) + " is empty");
  return m;
}

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j{{"path", r.path}, {"split", to_string(r.split)}};
  if (r.group) j["group"] = *r.group;
  return j;
}

inline void write_jsonl(const CorpusManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kWriteFailed, path.string());
  for (const auto& r : m.records) out << to_json(r).dump() << '\n';
}

inline CorpusManifest read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kFileNotFound, path.string());
  CorpusManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ManifestRecord r{j.at("path").get<std::string>(), parse_split(j.at("split").get<std::string>()), {}};
      if (j.contains("group")) r.group = j["group"].get<std::string>();
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

}  // namespace cwm
