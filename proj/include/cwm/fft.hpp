#pragma once

// Thin FFTW wrapper. Plans are created once per size under a lock and then
// executed through the new-array interface, which FFTW guarantees is
// thread-safe.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "cwm/error.hpp"

namespace cwm {

namespace fft_detail {

struct PlanPair {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  ~PlanPair() {
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
  }
};

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::shared_ptr<const PlanPair> plans_for(std::size_t n) {
  static std::map<std::size_t, std::shared_ptr<PlanPair>> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto pair = std::make_shared<PlanPair>();
  std::vector<double> re(n);
  std::vector<std::complex<double>> cx(n / 2 + 1);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  pair->r2c = fftw_plan_dft_r2c_1d(static_cast<int>(n), re.data(),
                                   reinterpret_cast<fftw_complex*>(cx.data()), flags);
  pair->c2r = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(cx.data()),
                                   re.data(), flags);
  cache.emplace(n, pair);
  return pair;
}

}  // namespace fft_detail

/// Real-input FFT of fixed size n; spectra hold n/2 + 1 bins.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    require(n >= 2, ErrorCode::kInvalidGeometry, "fft size must be >= 2");
    plans_ = fft_detail::plans_for(n);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    require(in.size() == n_ && out.size() == bins(), ErrorCode::kShapeMismatch, "fft forward");
    // r2c does not modify its input, the const_cast only satisfies the C signature
    fftw_execute_dft_r2c(plans_->r2c, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
  }

  /// Unnormalized inverse: out[t] = sum over the full Hermitian spectrum.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
    require(in.size() == bins() && out.size() == n_, ErrorCode::kShapeMismatch, "fft inverse");
    scratch_.assign(in.begin(), in.end());  // c2r clobbers its input
    fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(scratch_.data()), out.data());
  }

 private:
  std::size_t n_;
  std::shared_ptr<const fft_detail::PlanPair> plans_;
  mutable std::vector<std::complex<double>> scratch_;
};

}  // namespace cwm
