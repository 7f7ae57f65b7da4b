#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bssgate/audio_io.hpp"

namespace bssgate {

inline constexpr double kSdrCapDb = 80.0;
inline constexpr std::size_t kSdrDistortionTaps = 32;  // projection uses lags -32..32
inline constexpr std::size_t kMaxAlignShift = 512;
inline constexpr double kSegSnrFloorDb = -10.0;
inline constexpr double kSegSnrCeilDb = 35.0;

// SDR of `est` against `ref` after projecting `est` onto ref delayed by
// -taps..taps samples. Both mono, same length. Capped at +80 dB.
double sdr(const AudioClip& est, const AudioClip& ref, std::size_t taps = kSdrDistortionTaps);
double sdr(std::span<const double> est, std::span<const double> ref, std::size_t taps = kSdrDistortionTaps);

// Mean per-frame SNR over frames where ref is voiced, each frame clamped to
// [-10, 35] dB.
double seg_snr(const AudioClip& est, const AudioClip& ref, std::size_t frame_len = 320);
double seg_snr(std::span<const double> est, std::span<const double> ref, std::size_t frame_len = 320);

// Circular shift s in [-max_shift, max_shift] that maximizes
// sum_n est[(n + s) mod N] ref[n]. Ties go to the smaller |s|, then positive.
long best_alignment_shift(std::span<const double> est, std::span<const double> ref,
                          std::size_t max_shift = kMaxAlignShift);
// est circularly shifted by best_alignment_shift.
std::vector<double> align_to(std::span<const double> est, std::span<const double> ref,
                             std::size_t max_shift = kMaxAlignShift);

struct SeparationMetrics {
  std::string label;  // mode or file name
  double sdr_db = 0.0;
  double seg_snr_db = 0.0;
  long alignment_shift = 0;
  std::string noise_kind;
  double input_snr_db = 0.0;
};

struct ModeOutput {
  std::string mode;  // gated, per_frame, batch_offline
  AudioClip separated;
};

// Aligns `est` to `ref` (circular search, +-512 samples) and scores it.
SeparationMetrics score_estimate(const std::string& label, std::span<const double> est, std::span<const double> ref);

// Scores the noisy mixture (channel 1) and each separated output against the
// reverberant speech image at mic 1.
std::vector<SeparationMetrics> evaluate_run(const AudioClip& mixture, const AudioClip& reference,
                                            const std::vector<ModeOutput>& outputs, const std::string& noise_kind = "",
                                            double input_snr_db = 0.0);

// One row per (label, metric). The note names the metric substitutions.
std::string metrics_to_csv(const std::vector<SeparationMetrics>& rows);
std::string metrics_to_json(const std::vector<SeparationMetrics>& rows);
inline constexpr const char* kMetricsNote =
    "sdr: time-invariant 65-tap distortion projection; seg_snr reported in place of PESQ";

}  // namespace bssgate
