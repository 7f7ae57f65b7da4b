#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bssgate/audio_io.hpp"

namespace bssgate {

inline constexpr std::size_t kNumSources = 2;

using Matrix2c = Eigen::Matrix2cd;

// One 2x2 demixing matrix per frequency bin.
struct DemixingStack {
  std::vector<Matrix2c> w;
  std::size_t frame_of_last_update = 0;
  std::size_t update_count = 0;

  static DemixingStack identity(std::size_t num_bins);
  std::size_t num_bins() const noexcept { return w.size(); }
  bool is_finite() const;
};

struct IvaConfig {
  double eta = 0.1;
  int max_iters = 100;
  double tol = 1e-6;
  std::size_t buffer_frames = 50;
  double max_condition = 1e8;
  // batch_iva aborts when the largest per-bin norm grows by more than this.
  double divergence_ratio = 1e6;

  void validate() const;
};

// y[source][bin]
struct SourceEstimate {
  std::vector<ComplexVector> y;

  static SourceEstimate zeros(std::size_t num_bins);
  std::size_t num_bins() const noexcept { return y.empty() ? 0 : y.front().size(); }
};

SourceEstimate apply_demixing(const DemixingStack& w, const SpectralFrame& x);
// Allocation-free form; `out` must already have the frame's shape.
void apply_demixing(const DemixingStack& w, const SpectralFrame& x, SourceEstimate& out);

inline constexpr double kPhiEpsilon = 1e-12;

// y / sqrt(sum_f |y_f|^2 + eps): the multivariate score of a spherical
// super-Gaussian source, applied to one source's full spectrum.
ComplexVector phi(std::span<const std::complex<double>> y_p);

// One synchronized natural-gradient step for every bin:
//   W <- W + eta (I - E[phi(y) y^H]) W,  y = W x with the pre-step W,
// where E averages uniformly over `frames`.
DemixingStack gradient_step(const DemixingStack& w, std::span<const SpectralFrame> frames, double eta);

// Negative log-likelihood contrast of the spherical Laplacian source model:
//   sum_p E[||y_p||] - sum_f log|det W_f|.
double iva_contrast(const DemixingStack& w, std::span<const SpectralFrame> frames);

struct IvaResult {
  DemixingStack stack;  // rescaled with rescale_mdp
  int iterations = 0;
  bool converged = false;
};

// Repeats gradient_step until the mean per-bin Frobenius increment falls
// below cfg.tol or cfg.max_iters is reached, then applies rescale_mdp.
// The warm start is first multiplied by a scalar so that the outputs sit at
// the power level where the update's fixed point lives; the scalar is
// absorbed again by the final rescaling.
IvaResult batch_iva(std::span<const SpectralFrame> frames, const IvaConfig& cfg, const DemixingStack& w_init);

// W <- diag(W^-1) W per bin (minimal distortion principle).
DemixingStack rescale_mdp(const DemixingStack& w);

// Output channel with the larger ratio of mean energy on voice frames to mean
// energy on non-voice frames. Equal ratios go to the lower index. When no
// non-voice frame is available the voice-frame energy decides.
std::size_t select_speech_channel(std::span<const SourceEstimate> y_frames, std::span<const bool> vad_flags);

// Largest singular value over the smallest for a 2x2 matrix.
double condition_number(const Matrix2c& m);

std::string stack_to_json(const DemixingStack& w);
DemixingStack stack_from_json(const std::string& text);

}  // namespace bssgate
