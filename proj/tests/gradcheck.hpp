#pragma once

// Central finite-difference checks for the autograd kernels. Every kernel is
// reduced to a scalar through a fixed random projection so that each output
// element contributes to the gradient being checked.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cwm/augment.hpp"
#include "cwm/autograd/features.hpp"
#include "cwm/autograd/layers.hpp"
#include "cwm/lfcc.hpp"
#include "cwm/random.hpp"
#include "cwm/resample.hpp"

namespace cwm::gradcheck {

using ag::Tensor;

struct Case {
  std::vector<Tensor> inputs;                                // parameters to differentiate
  std::function<Tensor(const std::vector<Tensor>&)> output;  // any shape
};

struct Kernel {
  std::string name;
  std::function<Case(Rng&)> make;
};

inline std::vector<double> draw(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

/// Values bounded away from zero so that kinks at 0 are never straddled.
inline std::vector<double> draw_off_zero(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.05, 2.0);
  return v;
}

inline ag::Shape random_shape(Rng& rng, std::size_t max_rank = 3, std::size_t max_dim = 5) {
  ag::Shape s(1 + uniform_index(rng, max_rank));
  for (auto& d : s) d = 1 + uniform_index(rng, max_dim);
  return s;
}

inline Tensor param(Rng& rng, ag::Shape s, double lo = -1.0, double hi = 1.0) {
  const auto n = ag::numel(s);
  return Tensor::parameter(std::move(s), draw(rng, n, lo, hi));
}

/// max_i |analytic_i - numeric_i| / max(max_i |numeric_i|, 1e-8), over all inputs
inline double max_relative_error(Case c, double step = 1e-4, std::uint64_t seed = 7) {
  const auto probe = c.output(c.inputs);
  Rng rng(seed);
  const auto weights = Tensor::constant(probe.shape(), draw(rng, probe.size(), -1.0, 1.0));
  auto loss = [&] { return ag::sum(ag::mul(c.output(c.inputs), weights)); };

  for (auto& in : c.inputs) in.zero_grad();
  ag::backward(loss());
  double worst = 0.0;
  for (auto& in : c.inputs) {
    std::vector<double> analytic = in.grad();
    if (analytic.empty()) analytic.assign(in.size(), 0.0);
    std::vector<double> numeric(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double saved = in.value()[i];
      in.mutable_value()[i] = saved + step;
      const double up = loss().item();
      in.mutable_value()[i] = saved - step;
      const double down = loss().item();
      in.mutable_value()[i] = saved;
      numeric[i] = (up - down) / (2.0 * step);
    }
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
      scale = std::max(scale, std::abs(numeric[i]));
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

inline SparseLinearMap random_sparse_map(Rng& rng, std::size_t in, std::size_t out) {
  SparseLinearMap m(in, out);
  for (std::size_t r = 0; r < out; ++r)
    for (std::size_t c = 0; c < in; ++c)
      if (uniform01(rng) < 0.5) m.row(r).push_back({c, uniform(rng, -1.0, 1.0)});
  return m;
}

inline std::vector<Kernel> kernels() {
  using V = std::vector<Tensor>;
  std::vector<Kernel> k;
  auto binary = [&](std::string name, Tensor (*op)(const Tensor&, const Tensor&)) {
    k.push_back({name, [op](Rng& rng) {
                   auto s = random_shape(rng);
                   return Case{{param(rng, s), param(rng, s)}, [op](const V& in) { return op(in[0], in[1]); }};
                 }});
  };
  binary("add", ag::add);
  binary("sub", ag::sub);
  binary("mul", ag::mul);

  auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, double lo, double hi,
                   bool off_zero = false) {
    k.push_back({name, [op, lo, hi, off_zero](Rng& rng) {
                   auto s = random_shape(rng);
                   auto x = off_zero ? Tensor::parameter(s, draw_off_zero(rng, ag::numel(s))) : param(rng, s, lo, hi);
                   return Case{{x}, [op](const V& in) { return op(in[0]); }};
                 }});
  };
  unary("scale", [](const Tensor& x) { return ag::scale(x, -1.7); }, -1, 1);
  unary("add_scalar", [](const Tensor& x) { return ag::add_scalar(x, 0.3); }, -1, 1);
  unary("square", ag::square, -2, 2);
  unary("sqrt_floor", [](const Tensor& x) { return ag::sqrt_floor(x, 1e-3); }, 0.1, 2);
  unary("log", ag::log, 0.1, 2);
  // half of the values sit below the floor, where the output is constant
  unary("log_floor", [](const Tensor& x) { return ag::log_floor(x, 0.04); }, 0, 0, true);
  unary("abs", ag::abs, 0, 0, true);
  unary("tanh", ag::tanh, -2, 2);
  unary("leaky_relu", [](const Tensor& x) { return ag::leaky_relu(x, 0.1); }, 0, 0, true);
  unary("sum", ag::sum, -1, 1);
  unary("mean", ag::mean, -1, 1);
  unary("mean_last", ag::mean_last, -1, 1);

  k.push_back({"reshape", [](Rng& rng) {
                 auto x = param(rng, {2 + uniform_index(rng, 3), 2 + uniform_index(rng, 3)});
                 return Case{{x}, [](const V& in) { return ag::reshape(in[0], {in[0].size()}); }};
               }});
  k.push_back({"transpose", [](Rng& rng) {
                 auto x = param(rng, {1 + uniform_index(rng, 5), 1 + uniform_index(rng, 5)});
                 return Case{{x}, [](const V& in) { return ag::transpose(in[0]); }};
               }});
  k.push_back({"concat_last", [](Rng& rng) {
                 const std::size_t r = 1 + uniform_index(rng, 4);
                 auto a = param(rng, {r, 1 + uniform_index(rng, 4)});
                 auto b = param(rng, {r, 1 + uniform_index(rng, 4)});
                 return Case{{a, b}, [](const V& in) { return ag::concat_last({in[0], in[1], in[0]}); }};
               }});
  k.push_back({"map_last", [](Rng& rng) {
                 const std::size_t in_n = 1 + uniform_index(rng, 6), out_n = 1 + uniform_index(rng, 6);
                 auto m = ag::share(random_sparse_map(rng, in_n, out_n));
                 auto x = param(rng, {1 + uniform_index(rng, 3), in_n});
                 return Case{{x}, [m](const V& in) { return ag::map_last(in[0], m); }};
               }});
  k.push_back({"map_first", [](Rng& rng) {
                 const std::size_t in_n = 1 + uniform_index(rng, 6), out_n = 1 + uniform_index(rng, 6);
                 auto m = ag::share(random_sparse_map(rng, in_n, out_n));
                 auto x = param(rng, {in_n, 1 + uniform_index(rng, 3)});
                 return Case{{x}, [m](const V& in) { return ag::map_first(in[0], m); }};
               }});
  k.push_back({"linear", [](Rng& rng) {
                 const std::size_t in_n = 1 + uniform_index(rng, 5), out_n = 1 + uniform_index(rng, 5);
                 auto x = param(rng, {1 + uniform_index(rng, 3), in_n});
                 auto w = param(rng, {out_n, in_n});
                 auto b = param(rng, {out_n});
                 const bool with_bias = uniform01(rng) < 0.7;
                 if (!with_bias) return Case{{x, w}, [](const V& in) { return ag::linear(in[0], in[1], {}); }};
                 return Case{{x, w, b}, [](const V& in) { return ag::linear(in[0], in[1], in[2]); }};
               }});
  k.push_back({"conv1d", [](Rng& rng) {
                 const std::size_t cin = 1 + uniform_index(rng, 3), cout = 1 + uniform_index(rng, 3);
                 const std::size_t kw = 1 + uniform_index(rng, 5);
                 ag::Conv1dShape cs{1 + uniform_index(rng, 3), uniform_index(rng, 3)};
                 const std::size_t len = kw + uniform_index(rng, 12);
                 auto x = param(rng, {cin, len});
                 auto w = param(rng, {cout, cin, kw});
                 auto b = param(rng, {cout});
                 return Case{{x, w, b}, [cs](const V& in) { return ag::conv1d(in[0], in[1], in[2], cs); }};
               }});
  k.push_back({"upsample_nearest", [](Rng& rng) {
                 auto x = param(rng, {1 + uniform_index(rng, 3), 1 + uniform_index(rng, 6)});
                 const std::size_t f = 1 + uniform_index(rng, 4);
                 return Case{{x}, [f](const V& in) { return ag::upsample_nearest(in[0], f); }};
               }});
  auto random_geometry = [](Rng& rng) {
    StftGeometry g;
    g.frame_len = 8 + uniform_index(rng, 17);
    g.hop = 1 + uniform_index(rng, g.frame_len);
    g.fft_size = g.frame_len + uniform_index(rng, g.frame_len + 1);
    return g;
  };
  k.push_back({"stft_power", [random_geometry](Rng& rng) {
                 const auto g = random_geometry(rng);
                 auto x = param(rng, {g.frame_len + uniform_index(rng, 40)});
                 return Case{{x}, [g](const V& in) { return ag::stft_power(in[0], g); }};
               }});
  k.push_back({"stft_magnitude", [random_geometry](Rng& rng) {
                 const auto g = random_geometry(rng);
                 auto x = param(rng, {g.frame_len + uniform_index(rng, 40)});
                 return Case{{x}, [g](const V& in) { return ag::stft_magnitude(in[0], g); }};
               }});
  k.push_back({"time_stretch", [](Rng& rng) {
                 const std::size_t n = 2 + uniform_index(rng, 40);
                 auto m = ag::share(stretch_map(n, uniform(rng, 0.9, 1.1)));
                 auto x = param(rng, {n});
                 return Case{{x}, [m](const V& in) { return ag::map_last(in[0], m); }};
               }});
  k.push_back({"resample", [](Rng& rng) {
                 const std::size_t n = 8 + uniform_index(rng, 40);
                 auto m = ag::share(resample_map(n, 22050, 16000));
                 auto x = param(rng, {n});
                 return Case{{x}, [m](const V& in) { return ag::map_last(in[0], m); }};
               }});
  k.push_back({"add_noise", [](Rng& rng) {
                 const std::size_t n = 1 + uniform_index(rng, 30);
                 auto noise = Tensor::constant({n}, draw(rng, n, -0.3, 0.3));
                 auto x = param(rng, {n});
                 return Case{{x}, [noise](const V& in) { return ag::add(in[0], noise); }};
               }});
  k.push_back({"deltas", [](Rng& rng) {
                 const std::size_t t = 1 + uniform_index(rng, 8), d = 1 + uniform_index(rng, 3);
                 auto m = ag::share(delta_map(t, 2));
                 auto x = param(rng, {t, d});
                 return Case{{x}, [m](const V& in) { return ag::map_first(in[0], m); }};
               }});
  k.push_back({"log_mel", [](Rng& rng) {
                 StftGeometry g{32, 8, 32};
                 auto lm = std::make_shared<ag::LogMel>(g, 4 + uniform_index(rng, 4), 8000, 0.0, 4000.0);
                 auto x = param(rng, {32 + uniform_index(rng, 40)});
                 return Case{{x}, [lm](const V& in) { return (*lm)(in[0]); }};
               }});
  k.push_back({"lfcc", [](Rng& rng) {
                 LfccConfig cfg;
                 cfg.fft_size = 64;
                 cfg.n_filters = 6;
                 cfg.n_ceps = 1 + uniform_index(rng, 6);
                 cfg.frame_ms = 4.0;  // 32 samples at 8 kHz
                 cfg.hop_ms = 2.0;
                 auto f = std::make_shared<ag::Lfcc>(cfg, 8000);
                 auto x = param(rng, {32 + uniform_index(rng, 40)});
                 return Case{{x}, [f](const V& in) { return (*f)(in[0]); }};
               }});
  return k;
}

struct KernelResult {
  std::string name;
  std::size_t shapes = 0;
  double max_error = 0.0;
};

inline std::vector<KernelResult> check_all(std::size_t shapes_per_kernel = 10, std::uint64_t seed = 2024) {
  std::vector<KernelResult> out;
  const auto ks = kernels();
  for (std::size_t i = 0; i < ks.size(); ++i) {
    KernelResult r{ks[i].name, 0, 0.0};
    Rng rng(mix_seed(seed, i));
    for (std::size_t s = 0; s < shapes_per_kernel; ++s) {
      const auto c = ks[i].make(rng);
      r.max_error = std::max(r.max_error, max_relative_error(c, 1e-4, mix_seed(seed, 1000 * i + s)));
      ++r.shapes;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace cwm::gradcheck
