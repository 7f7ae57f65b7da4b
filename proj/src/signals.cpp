#include "bssgate/signals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "bssgate/errors.hpp"
#include "bssgate/random.hpp"

namespace bssgate {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Resonator {
  double a1 = 0, a2 = 0, gain = 0, y1 = 0, y2 = 0;
  Resonator(double freq, double bandwidth, double fs) {
    const double r = std::exp(-std::numbers::pi * bandwidth / fs);
    a1 = 2.0 * r * std::cos(kTwoPi * freq / fs);
    a2 = -r * r;
    gain = 1.0 - r;
  }
  double operator()(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

struct Vowel {
  double f1, f2, f3;
};
constexpr std::array<Vowel, 6> kVowels{{
    {730, 1090, 2440}, {530, 1840, 2480}, {270, 2290, 3010},
    {570, 840, 2410},  {300, 870, 2240},  {660, 1720, 2410},
}};

std::size_t sample_count(double duration_s, int fs) {
  if (!(duration_s > 0.0) || fs <= 0) throw PreconditionError("signal duration and rate must be positive");
  return static_cast<std::size_t>(std::llround(duration_s * fs));
}

void normalize_rms(std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / static_cast<double>(x.size()));
  if (rms > 0.0)
    for (double& v : x) v /= rms;
}

// Renders one voiced syllable into `out` starting at `start`.
void render_voiced(std::vector<double>& out, std::size_t start, std::size_t len, double f0_start, double f0_end,
                   const Vowel& vowel, double amplitude, double fs, std::mt19937_64& rng) {
  Resonator r1(vowel.f1, 80, fs), r2(vowel.f2, 100, fs), r3(vowel.f3, 140, fs);
  std::normal_distribution<double> aspiration(0.0, 0.02);
  double phase = 0.0, prev_shaped = 0.0;
  const std::size_t ramp = std::min<std::size_t>(len / 4, static_cast<std::size_t>(0.025 * fs));
  for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(len);
    const double f0 = f0_start + (f0_end - f0_start) * t;
    phase += kTwoPi * f0 / fs;
    if (phase > kTwoPi) phase -= kTwoPi;
    const int harmonics = std::max(1, static_cast<int>(4000.0 / f0));
    // sum_k sin(k phase) / k by the Chebyshev recurrence
    const double c = std::cos(phase);
    double s_prev = 0.0, s = std::sin(phase), src = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      src += s / k;
      const double next = 2.0 * c * s - s_prev;
      s_prev = s;
      s = next;
    }
    src += aspiration(rng);
    double env = 1.0;
    if (i < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(ramp));
    if (len - i <= ramp)
      env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - i) / static_cast<double>(ramp));
    const double shaped = r1(src) * 1.0 + r2(src) * 0.6 + r3(src) * 0.3;
    // first difference models radiation at the lips
    out[start + i] += amplitude * env * (shaped - prev_shaped);
    prev_shaped = shaped;
  }
}

void render_fricative(std::vector<double>& out, std::size_t start, std::size_t len, double amplitude, double fs,
                      std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  Resonator shape(4500, 2000, fs);
  double prev = 0.0;
  for (std::size_t i = 0; i < len && start + i < out.size(); ++i) {
    const double x = noise(rng);
    const double hp = x - prev;
    prev = x;
    const double t = static_cast<double>(i) / static_cast<double>(len);
    const double env = std::sin(std::numbers::pi * t);
    out[start + i] += amplitude * env * shape(hp);
  }
}

}  // namespace

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "babble") return NoiseKind::kBabble;
  if (name == "machinery") return NoiseKind::kMachinery;
  if (name == "white") return NoiseKind::kWhite;
  throw ValidationError("noise_kind", "unknown noise kind '" + name + "'");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kBabble: return "babble";
    case NoiseKind::kMachinery: return "machinery";
    case NoiseKind::kWhite: return "white";
  }
  return "unknown";
}

std::vector<double> synth_speech(double duration_s, std::uint64_t seed, int sample_rate_hz) {
  const std::size_t n = sample_count(duration_s, sample_rate_hz);
  const double fs = sample_rate_hz;
  std::vector<double> out(n, 0.0);
  std::mt19937_64 rng(derive_seed(seed, "speech"));
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const double base_f0 = 95.0 + 130.0 * u(rng);
  std::size_t pos = static_cast<std::size_t>((0.05 + 0.15 * u(rng)) * fs);
  while (pos < n) {
    const int syllables = 1 + static_cast<int>(u(rng) * 3.0);
    for (int s = 0; s < syllables && pos < n; ++s) {
      const std::size_t len = static_cast<std::size_t>((0.12 + 0.16 * u(rng)) * fs);
      const double amplitude = 0.5 + 0.5 * u(rng);
      if (u(rng) < 0.2) {
        render_fricative(out, pos, len / 2, amplitude * 0.25, fs, rng);
        pos += len / 2;
      } else {
        const double f0a = base_f0 * (0.9 + 0.2 * u(rng));
        const double f0b = f0a * (0.85 + 0.3 * u(rng));
        const auto& vowel = kVowels[static_cast<std::size_t>(u(rng) * kVowels.size()) % kVowels.size()];
        render_voiced(out, pos, len, f0a, f0b, vowel, amplitude, fs, rng);
        pos += len;
      }
      pos += static_cast<std::size_t>(0.01 * fs);
    }
    pos += static_cast<std::size_t>((0.08 + 0.27 * u(rng)) * fs);
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= 0.5 / peak;
  return out;
}

std::vector<double> babble_noise(double duration_s, std::uint64_t seed, int sample_rate_hz) {
  const std::size_t n = sample_count(duration_s, sample_rate_hz);
  std::vector<double> out(n, 0.0);
  for (int talker = 0; talker < 6; ++talker) {
    const auto voice = synth_speech(duration_s, derive_seed(seed, "babble", static_cast<std::uint64_t>(talker)),
                                    sample_rate_hz);
    for (std::size_t i = 0; i < n; ++i) out[i] += voice[i];
  }
  normalize_rms(out);
  return out;
}

std::vector<double> machinery_noise(double duration_s, std::uint64_t seed, int sample_rate_hz) {
  const std::size_t n = sample_count(duration_s, sample_rate_hz);
  const double fs = sample_rate_hz;
  std::mt19937_64 rng(derive_seed(seed, "machinery"));
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::array<double, 20> phases{};
  for (double& p : phases) p = u(rng);
  const double mod_phase = u(rng);

  std::vector<double> out(n);
  double lp1 = 0.0, lp2 = 0.0;
  const double k = std::exp(-kTwoPi * 300.0 / fs);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double hum = 0.0;
    for (std::size_t h = 0; h < phases.size(); ++h)
      hum += std::sin(kTwoPi * 50.0 * static_cast<double>(h + 1) * t + phases[h]) / static_cast<double>(h + 1);
    lp1 = k * lp1 + (1.0 - k) * g(rng);
    lp2 = k * lp2 + (1.0 - k) * lp1;
    const double am = 1.0 + 0.5 * std::sin(kTwoPi * 8.0 * t + mod_phase);
    out[i] = am * (0.5 * hum + 20.0 * lp2) + 0.05 * g(rng);
  }
  normalize_rms(out);
  return out;
}

std::vector<double> white_noise(double duration_s, std::uint64_t seed, int sample_rate_hz) {
  const std::size_t n = sample_count(duration_s, sample_rate_hz);
  std::mt19937_64 rng(derive_seed(seed, "white"));
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = g(rng);
  return out;
}

std::vector<double> generate_noise(NoiseKind kind, double duration_s, std::uint64_t seed, int sample_rate_hz) {
  switch (kind) {
    case NoiseKind::kBabble: return babble_noise(duration_s, seed, sample_rate_hz);
    case NoiseKind::kMachinery: return machinery_noise(duration_s, seed, sample_rate_hz);
    case NoiseKind::kWhite: return white_noise(duration_s, seed, sample_rate_hz);
  }
  throw ValidationError("noise_kind", "unhandled noise kind");
}

}  // namespace bssgate
