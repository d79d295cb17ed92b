#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "cwm/error.hpp"

namespace cwm {

/// Detector scores; higher means "more natural". Positives are natural
/// clips, negatives generated or watermarked ones.
struct ScoreSet {
  std::vector<double> positive;
  std::vector<double> negative;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Equal error rate by a threshold sweep over every distinct score plus
/// +-infinity, with FRR(t) = P(pos < t) and FAR(t) = P(neg >= t). The first
/// operating point where FAR - FRR stops being positive brackets the
/// crossing together with its predecessor; the EER is interpolated linearly
/// between the two.
inline EerResult eer(const ScoreSet& scores) {
  const auto& pos = scores.positive;
  const auto& neg = scores.negative;
  require(!pos.empty() && !neg.empty(), ErrorCode::kInvalidArgument, "eer needs scores for both classes");
  for (double v : pos) require(std::isfinite(v), ErrorCode::kInvalidArgument, "non-finite positive score");
  for (double v : neg) require(std::isfinite(v), ErrorCode::kInvalidArgument, "non-finite negative score");

  std::vector<double> p(pos), n(neg), thresholds;
  std::sort(p.begin(), p.end());
  std::sort(n.begin(), n.end());
  thresholds.reserve(p.size() + n.size() + 1);
  thresholds.insert(thresholds.end(), p.begin(), p.end());
  thresholds.insert(thresholds.end(), n.begin(), n.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  const double np = static_cast<double>(p.size()), nn = static_cast<double>(n.size());
  // at -inf nothing is rejected and everything is accepted
  double prev_frr = 0.0, prev_far = 1.0;
  double prev_t = -std::numeric_limits<double>::infinity();
  std::size_t ip = 0, in = 0;  // counts of pos < t and neg < t
  for (double t : thresholds) {
    while (ip < p.size() && p[ip] < t) ++ip;
    while (in < n.size() && n[in] < t) ++in;
    const double frr = static_cast<double>(ip) / np;
    const double far = static_cast<double>(n.size() - in) / nn;
    const double diff = far - frr;
    if (diff <= 0.0) {
      if (diff == 0.0) return {frr, t};
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      return {prev_frr + alpha * (frr - prev_frr), std::isfinite(t) ? t : prev_t};
    }
    prev_frr = frr;
    prev_far = far;
    prev_t = t;
  }
  return {prev_frr, prev_t};  // unreachable: at +inf the difference is -1
}

}  // namespace cwm
