#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "cwm/autograd/tensor.hpp"
#include "cwm/linear_map.hpp"
#include "cwm/matrix.hpp"

namespace cwm::ag {

namespace detail {

inline void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// dfdx(x, y) is the derivative at input x with output y
template <class F, class D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  std::vector<double> y(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result(x.shape(), std::move(y), {x}, [x, dfdx](Node& out) {
    auto& gx = x.node()->grad_buffer();
    const auto& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i] * dfdx(xv[i], out.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_result(a.shape(), std::move(y), {a, b}, [a, b](Node& out) {
    for (const Tensor* t : {&a, &b})
      if (t->requires_grad()) {
        auto& g = t->node()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
      }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "sub");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_result(a.shape(), std::move(y), {a, b}, [a, b](Node& out) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= out.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::same_shape(a, b, "mul");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_result(a.shape(), std::move(y), {a, b}, [a, b](Node& out) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * a.value()[i];
    }
  });
}

inline Tensor scale(const Tensor& x, double s) {
  return detail::unary(x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& x, double s) {
  return detail::unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Tensor sqrt_floor(const Tensor& x, double floor) {
  return detail::unary(
      x, [floor](double v) { return std::sqrt(std::max(v, floor)); },
      [floor](double v, double y) { return v > floor ? 0.5 / y : 0.0; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// log(max(x, floor)); zero gradient where the floor is active.
inline Tensor log_floor(const Tensor& x, double floor) {
  return detail::unary(
      x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

inline Tensor abs(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor leaky_relu(const Tensor& x, double slope = 0.1) {
  return detail::unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

// ---------------------------------------------------------------- reductions

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  return make_result({1}, {acc}, {x}, [x](Node& out) {
    auto& g = x.node()->grad_buffer();
    for (double& v : g) v += out.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  require(x.size() > 0, ErrorCode::kShapeMismatch, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

/// Mean over the last axis: [..., n] -> [...].
inline Tensor mean_last(const Tensor& x) {
  require(x.rank() >= 1 && x.shape().back() > 0, ErrorCode::kShapeMismatch, "mean_last needs a non-empty axis");
  const std::size_t n = x.shape().back(), rows = x.size() / n;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x.value()[r * n + i];
    y[r] = acc / static_cast<double>(n);
  }
  return make_result(out_shape, std::move(y), {x}, [x, n, rows](Node& out) {
    auto& g = x.node()->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) g[r * n + i] += out.grad[r] / static_cast<double>(n);
  });
}

// ---------------------------------------------------------------- shape

inline Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(), ErrorCode::kShapeMismatch,
          "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return make_result(std::move(shape), x.value(), {x}, [x](Node& out) {
    auto& g = x.node()->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
  });
}

/// [R, C] -> [C, R]
inline Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, ErrorCode::kShapeMismatch, "transpose needs rank 2");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x.value()[i * c + j];
  return make_result({c, r}, std::move(y), {x}, [x, r, c](Node& out) {
    auto& g = x.node()->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[j * r + i];
  });
}

/// Joins [R, a] and [R, b] into [R, a + b].
inline Tensor concat_last(const std::vector<Tensor>& parts) {
  require(!parts.empty() && parts[0].rank() == 2, ErrorCode::kShapeMismatch, "concat_last needs rank-2 inputs");
  const std::size_t rows = parts[0].dim(0);
  std::vector<std::size_t> offset;
  std::size_t width = 0;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.dim(0) == rows, ErrorCode::kShapeMismatch, "concat_last row mismatch");
    offset.push_back(width);
    width += p.dim(1);
  }
  std::vector<double> y(rows * width);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(parts[k].value().begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  y.begin() + static_cast<std::ptrdiff_t>(r * width + offset[k]));
  }
  return make_result({rows, width}, std::move(y), parts, [parts, offset, rows, width](Node& out) {
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!parts[k].requires_grad()) continue;
      auto& g = parts[k].node()->grad_buffer();
      const std::size_t w = parts[k].dim(1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < w; ++i) g[r * w + i] += out.grad[r * width + offset[k] + i];
    }
  });
}

// ---------------------------------------------------------------- fixed linear maps

inline SparseLinearMap to_sparse(const Matrix<double>& m) {
  SparseLinearMap map(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0.0) map.row(r).push_back({c, m(r, c)});
  return map;
}

/// Applies a constant map to every vector along the last axis.
using MapPtr = std::shared_ptr<const SparseLinearMap>;

inline MapPtr share(SparseLinearMap map) { return std::make_shared<const SparseLinearMap>(std::move(map)); }

inline Tensor map_last(const Tensor& x, const MapPtr& mp) {
  const auto& map = *mp;
  require(x.rank() >= 1 && x.shape().back() == map.in_size(), ErrorCode::kShapeMismatch,
          "map_last: last axis " + shape_str(x.shape()) + " vs map input " + std::to_string(map.in_size()));
  const std::size_t in = map.in_size(), out_n = map.out_size(), rows = x.size() / std::max<std::size_t>(in, 1);
  Shape shape = x.shape();
  shape.back() = out_n;
  std::vector<double> y(rows * out_n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().data() + r * in;
    for (std::size_t o = 0; o < out_n; ++o) {
      double acc = 0.0;
      for (const auto& t : map.row(o)) acc += t.weight * xr[t.index];
      y[r * out_n + o] = acc;
    }
  }
  return make_result(std::move(shape), std::move(y), {x}, [x, mp, in, out_n, rows](Node& out) {
    const auto& map = *mp;
    auto& g = x.node()->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      map.apply_transpose_add(std::span<const double>(out.grad.data() + r * out_n, out_n),
                              std::span<double>(g.data() + r * in, in));
  });
}

/// Applies a constant map along the first axis: [in, D] -> [out, D].
inline Tensor map_first(const Tensor& x, const MapPtr& mp) {
  const auto& map = *mp;
  require(x.rank() >= 1 && x.dim(0) == map.in_size(), ErrorCode::kShapeMismatch, "map_first: first axis mismatch");
  const std::size_t d = x.size() / std::max<std::size_t>(x.dim(0), 1), out_n = map.out_size();
  Shape shape = x.shape();
  shape[0] = out_n;
  std::vector<double> y(out_n * d, 0.0);
  for (std::size_t o = 0; o < out_n; ++o)
    for (const auto& t : map.row(o))
      for (std::size_t j = 0; j < d; ++j) y[o * d + j] += t.weight * x.value()[t.index * d + j];
  return make_result(std::move(shape), std::move(y), {x}, [x, mp, d, out_n](Node& out) {
    const auto& map = *mp;
    auto& g = x.node()->grad_buffer();
    for (std::size_t o = 0; o < out_n; ++o)
      for (const auto& t : map.row(o))
        for (std::size_t j = 0; j < d; ++j) g[t.index * d + j] += t.weight * out.grad[o * d + j];
  });
}

}  // namespace cwm::ag
