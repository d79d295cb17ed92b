#pragma once

#include <complex>
#include <cstring>
#include <cstddef>
#include <memory>
#include <vector>

#include "cwm/autograd/ops.hpp"
#include "cwm/fft.hpp"
#include "cwm/stft.hpp"

namespace cwm::ag {

/// x [..., in], w [out, in], b [out] (may be undefined) -> [..., out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(w.rank() == 2 && x.rank() >= 1 && x.shape().back() == w.dim(1), ErrorCode::kShapeMismatch,
          "linear: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  const std::size_t in = w.dim(1), out_n = w.dim(0), rows = x.size() / in;
  require(!b.defined() || b.size() == out_n, ErrorCode::kShapeMismatch, "linear bias size");
  Shape shape = x.shape();
  shape.back() = out_n;
  std::vector<double> y(rows * out_n);
  const auto& xv = x.value();
  const auto& wv = w.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out_n; ++o) {
      double acc = b.defined() ? b.value()[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += wv[o * in + i] * xv[r * in + i];
      y[r * out_n + o] = acc;
    }
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(std::move(shape), std::move(y), inputs, [x, w, b, in, out_n, rows](Node& out) {
    const auto& go = out.grad;
    if (x.requires_grad()) {
      auto& gx = x.node()->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out_n; ++o)
          for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += go[r * out_n + o] * w.value()[o * in + i];
    }
    if (w.requires_grad()) {
      auto& gw = w.node()->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out_n; ++o)
          for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += go[r * out_n + o] * x.value()[r * in + i];
    }
    if (b.defined() && b.requires_grad()) {
      auto& gb = b.node()->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out_n; ++o) gb[o] += go[r * out_n + o];
    }
  });
}

struct Conv1dShape {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

inline std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, Conv1dShape s) {
  const std::size_t padded = length + 2 * s.padding;
  return padded < kernel ? 0 : (padded - kernel) / s.stride + 1;
}

namespace detail {

// Four-lane double vectors (GCC/Clang extension). Loads go through memcpy,
// so no alignment is assumed.
using v4 = double __attribute__((vector_size(32)));

inline v4 load4(const double* p) {
  v4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, v4 v) { std::memcpy(p, &v, sizeof v); }

inline double hsum(v4 v) { return (v[0] + v[1]) + (v[2] + v[3]); }

/// Dot product with a fixed partial-sum layout, so results do not depend on
/// compiler flags.
inline double dot(const double* a, const double* b, std::size_t n) {
  v4 s0{0, 0, 0, 0}, s1{0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += load4(a + i) * load4(b + i);
    s1 += load4(a + i + 4) * load4(b + i + 4);
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum(s0 + s1) + tail;
}

/// out[j] += sum_t g[t] * base[offsets[j] + t] for every j: all taps of one
/// channel pair in a single sweep over g.
inline void correlate(const double* g, std::size_t n, const double* base, const std::vector<std::size_t>& offsets,
                      double* out) {
  constexpr std::size_t kTaps = 8;
  for (std::size_t j0 = 0; j0 < offsets.size(); j0 += kTaps) {
    const std::size_t m = std::min(kTaps, offsets.size() - j0);
    v4 acc[kTaps];
    const double* src[kTaps];
    for (std::size_t j = 0; j < m; ++j) {
      acc[j] = v4{0, 0, 0, 0};
      src[j] = base + offsets[j0 + j];
    }
    std::size_t t = 0;
    for (; t + 8 <= n; t += 8) {
      const v4 g0 = load4(g + t), g1 = load4(g + t + 4);
      for (std::size_t j = 0; j < m; ++j) acc[j] += g0 * load4(src[j] + t) + g1 * load4(src[j] + t + 4);
    }
    for (std::size_t j = 0; j < m; ++j) {
      double tail = 0.0;
      for (std::size_t u = t; u < n; ++u) tail += g[u] * src[j][u];
      out[j0 + j] += hsum(acc[j]) + tail;
    }
  }
}

inline constexpr std::size_t kBlock = 16;

/// out[t] = init + sum over terms of weight * src[t], for t in [0, n), with
/// 16 outputs accumulated in registers at a time. `terms(f)` calls
/// f(weight, src) once per term.
template <class Terms>
void accumulate(double* out, std::size_t n, double init, Terms&& terms) {
  std::size_t t0 = 0;
  for (; t0 + kBlock <= n; t0 += kBlock) {
    v4 a0{init, init, init, init}, a1 = a0, a2 = a0, a3 = a0;
    terms([&](double w, const double* src) {
      const v4 wv{w, w, w, w};
      const double* p = src + t0;
      a0 += wv * load4(p);
      a1 += wv * load4(p + 4);
      a2 += wv * load4(p + 8);
      a3 += wv * load4(p + 12);
    });
    store4(out + t0, a0);
    store4(out + t0 + 4, a1);
    store4(out + t0 + 8, a2);
    store4(out + t0 + 12, a3);
  }
  if (t0 < n) {
    double acc[kBlock];
    const std::size_t rem = n - t0;
    for (std::size_t i = 0; i < rem; ++i) acc[i] = init;
    terms([&](double w, const double* src) {
      for (std::size_t i = 0; i < rem; ++i) acc[i] += w * src[t0 + i];
    });
    std::copy_n(acc, rem, out + t0);
  }
}

}  // namespace detail

/// x [Cin, L], w [Cout, Cin, K], b [Cout] (may be undefined), zero padding on both sides.
///
/// The zero-padded input is stored split into `stride` phases, phase r
/// holding samples r, r + stride, ... Tap j = q * stride + r of output t then
/// reads phase r at position t + q, so every tap is a contiguous loop.
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, Conv1dShape s = {}) {
  require(x.rank() == 2 && w.rank() == 3 && w.dim(1) == x.dim(0), ErrorCode::kShapeMismatch,
          "conv1d: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  require(s.stride >= 1, ErrorCode::kInvalidArgument, "conv1d stride must be >= 1");
  const std::size_t cin = x.dim(0), len = x.dim(1), cout = w.dim(0), k = w.dim(2), st = s.stride;
  const std::size_t lout = conv1d_output_length(len, k, s);
  require(lout > 0, ErrorCode::kShapeMismatch, "conv1d input shorter than kernel");
  require(!b.defined() || b.size() == cout, ErrorCode::kShapeMismatch, "conv1d bias size");

  const std::size_t plen = lout + (k + st - 1) / st;  // samples per phase
  const std::size_t chan = st * plen;                 // phase block per input channel
  auto phases = std::make_shared<std::vector<double>>(cin * chan, 0.0);
  // padded position i = u * st + r lives at phases[ci * chan + r * plen + u]
  auto slot = [st, plen](std::size_t i) { return (i % st) * plen + i / st; };
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t pi = i + s.padding;
      if (pi < chan) (*phases)[ci * chan + slot(pi)] = x.value()[ci * len + i];
    }

  // tap offsets into one channel's phase block
  std::vector<std::size_t> tap(k);
  for (std::size_t j = 0; j < k; ++j) tap[j] = (j % st) * plen + j / st;

  std::vector<double> y(cout * lout, 0.0);
  const auto& wv = w.value();
  const double* ph = phases->data();
  for (std::size_t co = 0; co < cout; ++co) {
    const double bias = b.defined() ? b.value()[co] : 0.0;
    const double* wc = wv.data() + co * cin * k;
    detail::accumulate(y.data() + co * lout, lout, bias, [&](auto&& term) {
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t j = 0; j < k; ++j) term(wc[ci * k + j], ph + ci * chan + tap[j]);
    });
  }
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result({cout, lout}, std::move(y), inputs,
                     [x, w, b, s, cin, len, cout, k, lout, st, plen, chan, phases, slot](Node& out) {
    const auto& go = out.grad;
    const auto& wv = w.value();
    const bool gx_on = x.requires_grad(), gw_on = w.requires_grad();
    double* gw = gw_on ? w.node()->grad_buffer().data() : nullptr;
    if (gw_on) {
      std::vector<std::size_t> tap(k);
      for (std::size_t j = 0; j < k; ++j) tap[j] = (j % st) * plen + j / st;
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t ci = 0; ci < cin; ++ci)
          detail::correlate(go.data() + co * lout, lout, phases->data() + ci * chan, tap, gw + (co * cin + ci) * k);
    }
    std::vector<double> gp;
    if (gx_on) {
      // Phase r position u receives w[j] * g[u - q] for every tap j = q * st + r.
      // The output gradient is zero-extended by qmax on the left so every read is in range.
      const std::size_t qmax = (k + st - 1) / st;
      const std::size_t glen = qmax + plen;
      std::vector<double> gpad(cout * glen, 0.0);
      for (std::size_t co = 0; co < cout; ++co) std::copy_n(go.data() + co * lout, lout, gpad.data() + co * glen + qmax);
      gp.assign(cin * chan, 0.0);
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t r = 0; r < st; ++r) {
          detail::accumulate(gp.data() + ci * chan + r * plen, plen, 0.0, [&](auto&& term) {
            for (std::size_t co = 0; co < cout; ++co)
              for (std::size_t j = r; j < k; j += st) term(wv[(co * cin + ci) * k + j], gpad.data() + co * glen + qmax - j / st);
          });
        }
    }
    if (gx_on) {
      auto& gx = x.node()->grad_buffer();
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t pi = i + s.padding;
          if (pi < chan) gx[ci * len + i] += gp[ci * chan + slot(pi)];
        }
    }
    if (b.defined() && b.requires_grad()) {
      auto& gb = b.node()->grad_buffer();
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t t = 0; t < lout; ++t) gb[co] += go[co * lout + t];
    }
  });
}

/// [C, L] -> [C, L * factor], each sample repeated.
inline Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  require(x.rank() == 2 && factor >= 1, ErrorCode::kShapeMismatch, "upsample_nearest needs [C, L] and factor >= 1");
  const std::size_t c = x.dim(0), len = x.dim(1);
  std::vector<double> y(c * len * factor);
  for (std::size_t i = 0; i < c * len; ++i)
    for (std::size_t f = 0; f < factor; ++f) y[i * factor + f] = x.value()[i];
  return make_result({c, len * factor}, std::move(y), {x}, [x, c, len, factor](Node& out) {
    auto& g = x.node()->grad_buffer();
    for (std::size_t i = 0; i < c * len; ++i)
      for (std::size_t f = 0; f < factor; ++f) g[i] += out.grad[i * factor + f];
  });
}

/// |STFT(x)|^2 for a 1-D signal: [N] -> [T, fft/2 + 1], periodic Hann
/// window, frames as in StftGeometry. The backward pass reuses the stored
/// spectra and one inverse real FFT per frame.
inline Tensor stft_power(const Tensor& x, const StftGeometry& g) {
  g.validate();
  require(x.rank() == 1, ErrorCode::kShapeMismatch, "stft_power needs a 1-D signal");
  const std::size_t frames = g.frame_count(x.size()), bins = g.bins(), n = g.fft_size, flen = g.frame_len;
  require(frames > 0, ErrorCode::kShapeMismatch, "signal shorter than one frame");
  auto window = std::make_shared<const std::vector<double>>(hann_window(flen));
  auto spectra = std::make_shared<std::vector<std::complex<double>>>(frames * bins);
  const RealFft fft(n);
  std::vector<double> buf(n, 0.0), y(frames * bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < flen; ++i) buf[i] = x.value()[t * g.hop + i] * (*window)[i];
    std::span<std::complex<double>> spec(spectra->data() + t * bins, bins);
    fft.forward(buf, spec);
    for (std::size_t k = 0; k < bins; ++k) y[t * bins + k] = std::norm(spec[k]);
  }
  return make_result({frames, bins}, std::move(y), {x}, [x, g, window, spectra, frames, bins, n, flen](Node& out) {
    const RealFft fft(n);
    auto& gx = x.node()->grad_buffer();
    std::vector<std::complex<double>> h(bins);
    std::vector<double> time(n);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < bins; ++k) {
        // DC and Nyquist appear once in the Hermitian sum, the rest twice
        const bool edge = k == 0 || (n % 2 == 0 && k == bins - 1);
        h[k] = (edge ? 2.0 : 1.0) * out.grad[t * bins + k] * (*spectra)[t * bins + k];
      }
      fft.inverse(h, time);
      for (std::size_t i = 0; i < flen; ++i) gx[t * g.hop + i] += (*window)[i] * time[i];
    }
  });
}

/// |STFT(x)|; gradient taken as zero where the magnitude is exactly zero.
inline Tensor stft_magnitude(const Tensor& x, const StftGeometry& g) { return sqrt_floor(stft_power(x, g), 0.0); }

}  // namespace cwm::ag
