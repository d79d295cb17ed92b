#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "cwm/error.hpp"

namespace cwm {

/// A fixed linear map R^in -> R^out stored as sparse rows. Resampling and
/// linear-interpolation stretching are both instances, which is what lets
/// the training code treat them as differentiable layers.
class SparseLinearMap {
 public:
  struct Tap {
    std::size_t index;
    double weight;
  };

  SparseLinearMap() = default;
  SparseLinearMap(std::size_t in_size, std::size_t out_size) : in_size_(in_size), rows_(out_size) {}

  std::size_t in_size() const noexcept { return in_size_; }
  std::size_t out_size() const noexcept { return rows_.size(); }

  std::vector<Tap>& row(std::size_t r) { return rows_[r]; }
  const std::vector<Tap>& row(std::size_t r) const { return rows_[r]; }

  static SparseLinearMap identity(std::size_t n) {
    SparseLinearMap m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.rows_[i].push_back({i, 1.0});
    return m;
  }

  std::vector<double> apply(std::span<const double> x) const {
    require(x.size() == in_size_, ErrorCode::kShapeMismatch, "sparse map input size");
    std::vector<double> y(rows_.size(), 0.0);
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      double acc = 0.0;
      for (const auto& t : rows_[r]) acc += t.weight * x[t.index];
      y[r] = acc;
    }
    return y;
  }

  /// y += A^T g
  void apply_transpose_add(std::span<const double> g, std::span<double> y) const {
    for (std::size_t r = 0; r < rows_.size(); ++r)
      for (const auto& t : rows_[r]) y[t.index] += t.weight * g[r];
  }

 private:
  std::size_t in_size_ = 0;
  std::vector<std::vector<Tap>> rows_;
};

}  // namespace cwm
