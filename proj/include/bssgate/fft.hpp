#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace bssgate {

// Real-input FFT of fixed size backed by FFTW. The forward transform maps n
// real samples to n/2 + 1 complex bins; inverse(forward(x)) == x.
//
// Plans are created once; execute() does not allocate. Instances are not safe
// to share between threads, but distinct instances may run concurrently.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(RealFft&&) noexcept;
  RealFft& operator=(RealFft&&) noexcept;
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  // `in` may be shorter than size(); the remainder is zero-padded.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // Writes size() samples scaled by 1/n.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  struct Impl;
  std::size_t n_ = 0;
  std::unique_ptr<Impl> impl_;
};

// Linear convolution of two real sequences via FFT; result length
// a.size() + b.size() - 1.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b);

}  // namespace bssgate
