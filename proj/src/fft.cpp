#include "bssgate/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

#include "bssgate/errors.hpp"

namespace bssgate {
namespace {

// FFTW's planner is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

struct RealFft::Impl {
  double* time = nullptr;
  fftw_complex* freq = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;

  explicit Impl(std::size_t n) {
    std::lock_guard lock(planner_mutex());
    time = fftw_alloc_real(n);
    freq = fftw_alloc_complex(n / 2 + 1);
    const int ni = static_cast<int>(n);
    fwd = fftw_plan_dft_r2c_1d(ni, time, freq, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(ni, freq, time, FFTW_ESTIMATE);
  }
  ~Impl() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
    fftw_free(time);
    fftw_free(freq);
  }
};

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n == 0) throw PreconditionError("RealFft size must be positive");
  impl_ = std::make_unique<Impl>(n);
}

RealFft::~RealFft() = default;
RealFft::RealFft(RealFft&&) noexcept = default;
RealFft& RealFft::operator=(RealFft&&) noexcept = default;

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() > n_ || out.size() < bins()) throw PreconditionError("RealFft::forward size mismatch");
  std::copy(in.begin(), in.end(), impl_->time);
  std::fill(impl_->time + in.size(), impl_->time + n_, 0.0);
  fftw_execute(impl_->fwd);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {impl_->freq[k][0], impl_->freq[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() < bins() || out.size() < n_) throw PreconditionError("RealFft::inverse size mismatch");
  for (std::size_t k = 0; k < bins(); ++k) {
    impl_->freq[k][0] = in[k].real();
    impl_->freq[k][1] = in[k].imag();
  }
  // c2r assumes Hermitian input; imaginary parts of real-valued bins are ignored.
  fftw_execute(impl_->inv);
  const double scale = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = impl_->time[i] * scale;
}

std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  if (std::min(a.size(), b.size()) <= 32) {
    std::vector<double> out(out_len, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
  }
  const std::size_t n = next_pow2(out_len);
  RealFft fft(n);
  std::vector<std::complex<double>> fa(fft.bins()), fb(fft.bins());
  fft.forward(a, fa);
  fft.forward(b, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  std::vector<double> full(n);
  fft.inverse(fa, full);
  full.resize(out_len);
  return full;
}

}  // namespace bssgate
