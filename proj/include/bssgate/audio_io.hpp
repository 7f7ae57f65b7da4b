#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bssgate/fft.hpp"

namespace bssgate {

inline constexpr int kCanonicalRateHz = 16000;

// Multichannel waveform. All channels share one length and one sample rate.
class AudioClip {
 public:
  AudioClip() = default;
  AudioClip(std::vector<std::vector<double>> channels, int sample_rate_hz);

  static AudioClip mono(std::vector<double> samples, int sample_rate_hz);
  static AudioClip zeros(std::size_t num_channels, std::size_t num_samples, int sample_rate_hz);

  int sample_rate_hz() const noexcept { return sample_rate_hz_; }
  std::size_t num_channels() const noexcept { return channels_.size(); }
  std::size_t num_samples() const noexcept { return channels_.empty() ? 0 : channels_.front().size(); }
  bool empty() const noexcept { return num_samples() == 0; }
  double duration_s() const noexcept {
    return static_cast<double>(num_samples()) / static_cast<double>(sample_rate_hz_);
  }

  std::span<const double> channel(std::size_t c) const { return channels_.at(c); }
  std::span<double> channel(std::size_t c) { return channels_.at(c); }
  const std::vector<std::vector<double>>& channels() const noexcept { return channels_; }

  AudioClip slice(std::size_t begin, std::size_t count) const;

 private:
  std::vector<std::vector<double>> channels_;
  int sample_rate_hz_ = kCanonicalRateHz;
};

// ---------------------------------------------------------------------------
// WAV

enum class WavFormat { kPcm16, kFloat32 };

struct WavWriteReport {
  std::size_t clipped_samples = 0;
};

AudioClip read_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const std::uint8_t> bytes);

// Samples outside [-1, 1] are saturated and counted in the report.
WavWriteReport write_wav(const AudioClip& clip, const std::filesystem::path& path,
                         WavFormat format = WavFormat::kPcm16);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavFormat format,
                                     WavWriteReport* report = nullptr);

// ---------------------------------------------------------------------------
// STFT

struct StftConfig {
  std::size_t frame_len = 320;
  std::size_t hop = 160;
  std::size_t fft_size = 512;
  std::vector<double> window;

  // 20 ms frames at 16 kHz, 50% overlap, 512-point FFT, periodic sqrt-Hann.
  static StftConfig standard();
  std::size_t num_bins() const noexcept { return fft_size / 2 + 1; }
  std::size_t num_frames(std::size_t num_samples) const noexcept {
    return num_samples < frame_len ? 0 : (num_samples - frame_len) / hop + 1;
  }
  // Throws ValidationError when the hop, size or window contract is broken.
  void validate() const;
};

std::vector<double> sqrt_hann_periodic(std::size_t n);

// Relative deviation of the hop-shifted sum of squared windows from its mean.
double cola_deviation(std::span<const double> window, std::size_t hop);

using ComplexVector = std::vector<std::complex<double>>;

struct SpectralFrame {
  std::vector<ComplexVector> coeffs;  // [channel][bin]
  std::size_t frame_index = 0;

  std::size_t num_channels() const noexcept { return coeffs.size(); }
  std::size_t num_bins() const noexcept { return coeffs.empty() ? 0 : coeffs.front().size(); }
};

std::vector<SpectralFrame> stft_analyze(const AudioClip& clip, const StftConfig& cfg);
AudioClip istft_synthesize(std::span<const SpectralFrame> frames, const StftConfig& cfg,
                           int sample_rate_hz = kCanonicalRateHz);

// Interior sample range [begin, end) that is covered by two windows after
// synthesizing `num_frames` frames.
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};
SampleRange fully_overlapped_interior(std::size_t num_frames, const StftConfig& cfg);

// Streaming analysis of one frame for a fixed channel count. No allocation
// after construction.
class StftAnalyzer {
 public:
  StftAnalyzer(StftConfig cfg, std::size_t num_channels);
  const StftConfig& config() const noexcept { return cfg_; }
  // `channels[c]` must hold exactly frame_len samples. `out` must already be
  // shaped [num_channels][num_bins].
  void analyze(std::span<const std::span<const double>> channels, SpectralFrame& out);
  SpectralFrame make_frame() const;

 private:
  StftConfig cfg_;
  std::size_t num_channels_;
  RealFft fft_;
  std::vector<double> scratch_;
};

// Streaming weighted overlap-add for one channel. Each push() consumes one
// spectrum and emits `hop` finished samples.
class OverlapAddSynthesizer {
 public:
  explicit OverlapAddSynthesizer(StftConfig cfg);
  void push(std::span<const std::complex<double>> spectrum, std::span<double> out_hop);
  // Emits the remaining frame_len - hop samples of the last frame.
  void flush(std::span<double> out_tail);
  void reset();

 private:
  StftConfig cfg_;
  RealFft fft_;
  std::vector<double> time_;
  std::vector<double> tail_;
};

// ---------------------------------------------------------------------------
// Resampling

// 48 kHz -> 16 kHz: zero-phase Kaiser low-pass FIR (-6 dB at 7.2 kHz, >= 70 dB
// from 8 kHz) followed by keeping every third sample.
AudioClip resample_3to1(const AudioClip& clip);

}  // namespace bssgate
