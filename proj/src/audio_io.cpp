#include "bssgate/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "bssgate/errors.hpp"

namespace bssgate {

// ---------------------------------------------------------------------------
// AudioClip

AudioClip::AudioClip(std::vector<std::vector<double>> channels, int sample_rate_hz)
    : channels_(std::move(channels)), sample_rate_hz_(sample_rate_hz) {
  if (sample_rate_hz_ <= 0) throw PreconditionError("AudioClip: sample rate must be positive");
  if (channels_.empty()) throw PreconditionError("AudioClip: at least one channel required");
  for (const auto& ch : channels_)
    if (ch.size() != channels_.front().size())
      throw PreconditionError("AudioClip: channels must have equal length");
}

AudioClip AudioClip::mono(std::vector<double> samples, int sample_rate_hz) {
  std::vector<std::vector<double>> ch;
  ch.push_back(std::move(samples));
  return AudioClip(std::move(ch), sample_rate_hz);
}

AudioClip AudioClip::zeros(std::size_t num_channels, std::size_t num_samples, int sample_rate_hz) {
  return AudioClip(std::vector<std::vector<double>>(num_channels, std::vector<double>(num_samples, 0.0)),
                   sample_rate_hz);
}

AudioClip AudioClip::slice(std::size_t begin, std::size_t count) const {
  if (begin > num_samples()) throw PreconditionError("AudioClip::slice: begin out of range");
  count = std::min(count, num_samples() - begin);
  std::vector<std::vector<double>> out;
  for (const auto& ch : channels_)
    out.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(begin),
                     ch.begin() + static_cast<std::ptrdiff_t>(begin + count));
  return AudioClip(std::move(out), sample_rate_hz_);
}

// ---------------------------------------------------------------------------
// WAV

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw DecodeError("RIFF", "file shorter than RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw DecodeError("RIFF", "missing RIFF tag");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw DecodeError("WAVE", "missing WAVE tag");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw DecodeError("fmt", "truncated fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw DecodeError("fmt", "truncated WAVE_FORMAT_EXTENSIBLE");
        format = le16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + size > bytes.size()) throw DecodeError("data", "data chunk truncated");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw DecodeError("fmt", "missing fmt chunk");
  if (channels != 1 && channels != 2) throw DecodeError("num_channels", "only mono or stereo supported");
  if (rate == 0) throw DecodeError("sample_rate", "zero sample rate");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) throw DecodeError("audio_format", "only PCM 16-bit and IEEE float 32-bit supported");
  if (data == nullptr) throw DecodeError("data", "missing data chunk");

  const std::size_t bytes_per_frame = static_cast<std::size_t>(channels) * (bits / 8);
  if (data_size % bytes_per_frame != 0) throw DecodeError("data", "size is not a whole number of frames");
  const std::size_t n = data_size / bytes_per_frame;

  std::vector<std::vector<double>> out(channels, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * bytes_per_frame + c * (bits / 8);
      if (pcm16) {
        out[c][i] = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else {
        const std::uint32_t raw = le32(p);
        float f;
        std::memcpy(&f, &raw, sizeof f);
        out[c][i] = f;
      }
    }
  }
  return AudioClip(std::move(out), static_cast<int>(rate));
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavFormat format, WavWriteReport* report) {
  if (clip.empty()) throw PreconditionError("write_wav: clip is empty");
  const std::uint16_t channels = static_cast<std::uint16_t>(clip.num_channels());
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::size_t n = clip.num_samples();
  const std::uint32_t data_size = static_cast<std::uint32_t>(n * channels * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put16(out, channels);
  put32(out, static_cast<std::uint32_t>(clip.sample_rate_hz()));
  put32(out, static_cast<std::uint32_t>(clip.sample_rate_hz()) * channels * (bits / 8));
  put16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data_size);

  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      double v = clip.channel(c)[i];
      if (!std::isfinite(v) || v > 1.0 || v < -1.0) {
        ++clipped;
        v = std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0;
      }
      if (format == WavFormat::kPcm16) {
        const long q = std::lround(v * 32768.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t raw;
        std::memcpy(&raw, &f, sizeof raw);
        put32(out, raw);
      }
    }
  }
  if (report) report->clipped_samples = clipped;
  return out;
}

WavWriteReport write_wav(const AudioClip& clip, const std::filesystem::path& path, WavFormat format) {
  WavWriteReport report;
  const auto bytes = encode_wav(clip, format, &report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
  return report;
}

// ---------------------------------------------------------------------------
// STFT

std::vector<double> sqrt_hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = std::sqrt(0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n))));
  return w;
}

double cola_deviation(std::span<const double> window, std::size_t hop) {
  if (hop == 0 || window.empty()) return INFINITY;
  std::vector<double> acc(hop, 0.0);
  for (std::size_t i = 0; i < window.size(); ++i) acc[i % hop] += window[i] * window[i];
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  double mean = 0.0;
  for (double a : acc) mean += a;
  mean /= static_cast<double>(hop);
  return mean > 0.0 ? (*hi - *lo) / mean : INFINITY;
}

StftConfig StftConfig::standard() {
  StftConfig cfg;
  cfg.window = sqrt_hann_periodic(cfg.frame_len);
  return cfg;
}

void StftConfig::validate() const {
  if (frame_len == 0 || frame_len % 2 != 0) throw ValidationError("frame_len", "must be positive and even");
  if (hop != frame_len / 2) throw ValidationError("hop", "must equal frame_len / 2");
  if (fft_size < frame_len || fft_size % 2 != 0) throw ValidationError("fft_size", "must be even and >= frame_len");
  if (window.size() != frame_len) throw ValidationError("window", "length must equal frame_len");
  const double dev = cola_deviation(window, hop);
  if (!(dev <= 1e-10)) throw ValidationError("window", "violates constant overlap-add");
  double sum = 0.0;
  for (std::size_t i = 0; i < hop; ++i) sum += window[i] * window[i] + window[i + hop] * window[i + hop];
  if (std::abs(sum / static_cast<double>(hop) - 1.0) > 1e-10)
    throw ValidationError("window", "squared overlap-add must sum to one");
}

SampleRange fully_overlapped_interior(std::size_t num_frames, const StftConfig& cfg) {
  if (num_frames < 2) return {};
  return {cfg.hop, (num_frames - 1) * cfg.hop + (cfg.frame_len - cfg.hop)};
}

StftAnalyzer::StftAnalyzer(StftConfig cfg, std::size_t num_channels)
    : cfg_(std::move(cfg)), num_channels_(num_channels), fft_(cfg_.fft_size), scratch_(cfg_.frame_len) {
  cfg_.validate();
}

SpectralFrame StftAnalyzer::make_frame() const {
  SpectralFrame f;
  f.coeffs.assign(num_channels_, ComplexVector(cfg_.num_bins()));
  return f;
}

void StftAnalyzer::analyze(std::span<const std::span<const double>> channels, SpectralFrame& out) {
  if (channels.size() != num_channels_ || out.coeffs.size() != num_channels_)
    throw PreconditionError("StftAnalyzer: channel count mismatch");
  for (std::size_t c = 0; c < num_channels_; ++c) {
    if (channels[c].size() != cfg_.frame_len) throw PreconditionError("StftAnalyzer: frame length mismatch");
    for (std::size_t i = 0; i < cfg_.frame_len; ++i) scratch_[i] = channels[c][i] * cfg_.window[i];
    fft_.forward(scratch_, out.coeffs[c]);
  }
}

std::vector<SpectralFrame> stft_analyze(const AudioClip& clip, const StftConfig& cfg) {
  if (clip.sample_rate_hz() != kCanonicalRateHz)
    throw PreconditionError("stft_analyze: expected a 16 kHz clip");
  if (clip.num_samples() < cfg.frame_len) throw PreconditionError("stft_analyze: clip shorter than one frame");
  StftAnalyzer analyzer(cfg, clip.num_channels());
  const std::size_t count = cfg.num_frames(clip.num_samples());
  std::vector<SpectralFrame> frames;
  frames.reserve(count);
  std::vector<std::span<const double>> views(clip.num_channels());
  for (std::size_t m = 0; m < count; ++m) {
    for (std::size_t c = 0; c < clip.num_channels(); ++c)
      views[c] = clip.channel(c).subspan(m * cfg.hop, cfg.frame_len);
    SpectralFrame frame = analyzer.make_frame();
    analyzer.analyze(views, frame);
    frame.frame_index = m;
    frames.push_back(std::move(frame));
  }
  return frames;
}

OverlapAddSynthesizer::OverlapAddSynthesizer(StftConfig cfg)
    : cfg_(std::move(cfg)), fft_(cfg_.fft_size), time_(cfg_.fft_size), tail_(cfg_.frame_len - cfg_.hop, 0.0) {
  cfg_.validate();
}

void OverlapAddSynthesizer::reset() { std::fill(tail_.begin(), tail_.end(), 0.0); }

void OverlapAddSynthesizer::push(std::span<const std::complex<double>> spectrum, std::span<double> out_hop) {
  if (spectrum.size() != cfg_.num_bins() || out_hop.size() != cfg_.hop)
    throw PreconditionError("OverlapAddSynthesizer: size mismatch");
  fft_.inverse(spectrum, time_);
  const std::size_t overlap = cfg_.frame_len - cfg_.hop;  // == hop at 50% overlap
  for (std::size_t i = 0; i < cfg_.frame_len; ++i) time_[i] *= cfg_.window[i];
  for (std::size_t i = 0; i < cfg_.hop; ++i) out_hop[i] = tail_[i] + time_[i];
  for (std::size_t i = 0; i < overlap; ++i) tail_[i] = time_[cfg_.hop + i];
}

void OverlapAddSynthesizer::flush(std::span<double> out_tail) {
  if (out_tail.size() != tail_.size()) throw PreconditionError("OverlapAddSynthesizer: tail size mismatch");
  std::copy(tail_.begin(), tail_.end(), out_tail.begin());
  reset();
}

AudioClip istft_synthesize(std::span<const SpectralFrame> frames, const StftConfig& cfg, int sample_rate_hz) {
  if (frames.empty()) throw PreconditionError("istft_synthesize: no frames");
  const std::size_t channels = frames.front().num_channels();
  for (const auto& f : frames)
    if (f.num_channels() != channels || f.num_bins() != cfg.num_bins())
      throw PreconditionError("istft_synthesize: frames differ in shape");
  const std::size_t n = (frames.size() - 1) * cfg.hop + cfg.frame_len;
  std::vector<std::vector<double>> out(channels, std::vector<double>(n, 0.0));
  for (std::size_t c = 0; c < channels; ++c) {
    OverlapAddSynthesizer ola(cfg);
    for (std::size_t m = 0; m < frames.size(); ++m)
      ola.push(frames[m].coeffs[c], std::span<double>(out[c]).subspan(m * cfg.hop, cfg.hop));
    ola.flush(std::span<double>(out[c]).subspan(frames.size() * cfg.hop, cfg.frame_len - cfg.hop));
  }
  return AudioClip(std::move(out), sample_rate_hz);
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

std::vector<double> design_decimator() {
  constexpr double fs = 48000.0;
  constexpr double cutoff = 7200.0;
  constexpr double atten_db = 70.0;
  constexpr double transition = 1600.0;  // 6.4 kHz .. 8.0 kHz
  const double beta = 0.1102 * (atten_db - 8.7);
  const double dw = 2.0 * std::numbers::pi * transition / fs;
  std::size_t taps = static_cast<std::size_t>(std::ceil((atten_db - 8.0) / (2.285 * dw))) + 1;
  if (taps % 2 == 0) ++taps;
  const double mid = static_cast<double>(taps - 1) / 2.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(taps);
  double sum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - mid;
    const double x = 2.0 * cutoff / fs;
    const double sinc = t == 0.0 ? x : std::sin(std::numbers::pi * x * t) / (std::numbers::pi * t);
    const double r = t / mid;
    const double kaiser = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[i] = sinc * kaiser;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace

AudioClip resample_3to1(const AudioClip& clip) {
  if (clip.sample_rate_hz() != 48000)
    throw PreconditionError("resample_3to1: unsupported rate " + std::to_string(clip.sample_rate_hz()) +
                            " Hz (expected 48000)");
  static const std::vector<double> h = design_decimator();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(h.size() / 2);
  const std::size_t n_in = clip.num_samples();
  const std::size_t n_out = n_in / 3;
  std::vector<std::vector<double>> out(clip.num_channels(), std::vector<double>(n_out));
  for (std::size_t c = 0; c < clip.num_channels(); ++c) {
    const auto x = clip.channel(c);
    for (std::size_t k = 0; k < n_out; ++k) {
      const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(3 * k);
      double acc = 0.0;
      for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(h.size()); ++j) {
        const std::ptrdiff_t idx = center + half - j;
        if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(n_in)) acc += h[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(idx)];
      }
      out[c][k] = acc;
    }
  }
  return AudioClip(std::move(out), kCanonicalRateHz);
}

}  // namespace bssgate
