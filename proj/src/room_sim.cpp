#include "bssgate/room_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bssgate/errors.hpp"
#include "bssgate/fft.hpp"
#include "bssgate/random.hpp"

namespace bssgate {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr int kHalfKernel = static_cast<int>(kFractionalDelayTaps / 2);

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool inside(const Vec3& p, const Vec3& room) {
  for (int i = 0; i < 3; ++i)
    if (!(p[static_cast<std::size_t>(i)] > 0.0 && p[static_cast<std::size_t>(i)] < room[static_cast<std::size_t>(i)]))
      return false;
  return true;
}

// Hann-windowed sinc tap for a tap located `t` samples from the true delay.
double fractional_tap(double t) {
  if (std::abs(t) >= kHalfKernel + 0.5) return 0.0;
  const double window = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * t / static_cast<double>(kFractionalDelayTaps)));
  const double sinc = t == 0.0 ? 1.0 : std::sin(std::numbers::pi * t) / (std::numbers::pi * t);
  return window * sinc;
}

// Adds amplitude * delta(n - delay) rendered with the fractional delay kernel.
void add_impulse(std::vector<double>& taps, double delay, double amplitude) {
  const long center = std::lround(delay);
  for (long n = center - kHalfKernel; n <= center + kHalfKernel; ++n) {
    if (n < 0 || n >= static_cast<long>(taps.size())) continue;
    taps[static_cast<std::size_t>(n)] += amplitude * fractional_tap(static_cast<double>(n) - delay);
  }
}

// Snaps to a 2^-36 grid so that sums and differences of mixture components
// are exact in double precision.
double quantize(double x) { return std::ldexp(std::nearbyint(std::ldexp(x, 36)), -36); }

std::vector<double> fit_length(std::span<const double> x, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i % x.size()];
  return out;
}

}  // namespace

void SceneConfig::validate() const {
  for (double d : room_dims)
    if (!(d > 0.0)) throw ValidationError("room_dims", "dimensions must be positive");
  if (!(t60 >= 0.0) || !std::isfinite(t60)) throw ValidationError("t60", "must be finite and >= 0");
  if (!(mic_spacing > 0.0)) throw ValidationError("mic_spacing", "must be positive");
  if (!(source_distance > mic_spacing)) throw ValidationError("source_distance", "must exceed mic_spacing");
  if (!(source_angle_deg >= 0.0 && source_angle_deg <= 180.0))
    throw ValidationError("source_angle_deg", "must lie in [0, 180]");
  if (!std::isfinite(snr_db)) throw ValidationError("snr_db", "must be finite");
  if (sample_rate_hz <= 0) throw ValidationError("sample_rate_hz", "must be positive");
  for (const auto& m : mic_positions())
    if (!inside(m, room_dims)) throw ValidationError("array_center", "microphones must lie inside the room");
  if (!inside(source_position(), room_dims))
    throw ValidationError("source_distance", "source must lie inside the room");
}

Vec3 SceneConfig::source_position() const {
  const double a = source_angle_deg * kDegToRad;
  return {array_center[0] + source_distance * std::cos(a), array_center[1] + source_distance * std::sin(a),
          array_center[2]};
}

std::array<Vec3, 2> SceneConfig::mic_positions() const {
  const double h = mic_spacing / 2.0;
  return {{{array_center[0] + h, array_center[1], array_center[2]},
           {array_center[0] - h, array_center[1], array_center[2]}}};
}

double reflection_coefficient(const Vec3& room, double t60) {
  if (t60 <= 0.0) return 0.0;
  const double volume = room[0] * room[1] * room[2];
  const double surface = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2]);
  // Eyring: t60 = 0.161 V / (-S ln(1 - alpha)), beta = sqrt(1 - alpha)
  return std::exp(-0.161 * volume / (2.0 * surface * t60));
}

namespace {

struct ImageSource {
  double delay = 0.0;  // samples
  double distance = 0.0;
  int reflections = 0;
};

template <typename Fn>
void for_each_image(const SceneConfig& cfg, const Vec3& src, const Vec3& mic, std::size_t length, bool reflections,
                    Fn&& fn) {
  const double fs = cfg.sample_rate_hz;
  const double max_dist = static_cast<double>(length) / fs * kSpeedOfSound;
  std::array<int, 3> order{};
  for (std::size_t a = 0; a < 3; ++a)
    order[a] = reflections ? static_cast<int>(std::ceil(max_dist / (2.0 * cfg.room_dims[a]))) + 1 : 0;
  for (int nx = -order[0]; nx <= order[0]; ++nx)
    for (int ny = -order[1]; ny <= order[1]; ++ny)
      for (int nz = -order[2]; nz <= order[2]; ++nz)
        for (int parity = 0; parity < 8; ++parity) {
          const std::array<int, 3> n{nx, ny, nz};
          const std::array<int, 3> p{parity & 1, (parity >> 1) & 1, (parity >> 2) & 1};
          Vec3 image{};
          int count = 0;
          for (std::size_t a = 0; a < 3; ++a) {
            image[a] = (1 - 2 * p[a]) * src[a] + 2.0 * n[a] * cfg.room_dims[a];
            count += std::abs(n[a] - p[a]) + std::abs(n[a]);
          }
          if (count > 0 && !reflections) continue;
          const double dist = distance(image, mic);
          const double delay = dist / kSpeedOfSound * fs;
          if (delay >= static_cast<double>(length)) continue;
          fn(ImageSource{delay, dist, count});
        }
}

// Decay time of the incoherent image-energy histogram, from a Schroeder
// backward integral fitted between -5 and -35 dB.
double image_decay_time(std::span<const ImageSource> images, double beta, std::size_t length, double fs) {
  std::vector<double> energy(length, 0.0);
  const double log_beta2 = 2.0 * std::log(beta);
  for (const auto& im : images)
    energy[static_cast<std::size_t>(im.delay)] += std::exp(log_beta2 * im.reflections) / (im.distance * im.distance);
  for (std::size_t i = length - 1; i-- > 0;) energy[i] += energy[i + 1];
  double n = 0, st = 0, sd = 0, stt = 0, std_ = 0;
  for (std::size_t i = 0; i < length; ++i) {
    const double level = 10.0 * std::log10(energy[i] / energy[0]);
    if (level > -5.0 || level < -35.0) continue;
    const double t = static_cast<double>(i) / fs;
    n += 1;
    st += t;
    sd += level;
    stt += t * t;
    std_ += t * level;
  }
  if (n < 2) return 0.0;
  const double slope = (n * std_ - st * sd) / (n * stt - st * st);
  return slope < 0.0 ? -60.0 / slope : std::numeric_limits<double>::infinity();
}

// Second-order high-pass at 100 Hz (Allen and Berkley) that removes the DC
// build-up of all-positive image amplitudes.
void remove_dc_buildup(std::vector<double>& taps, double fs) {
  const double w = 2.0 * std::numbers::pi * 100.0 / fs;
  const double r1 = std::exp(-w);
  const double b1 = 2.0 * r1 * std::cos(w);
  const double b2 = -r1 * r1;
  const double a1 = -(1.0 + r1);
  double y1 = 0.0, y2 = 0.0;
  for (double& v : taps) {
    const double y0 = b1 * y1 + b2 * y2 + v;
    v = y0 + a1 * y1 + r1 * y2;
    y2 = y1;
    y1 = y0;
  }
}

}  // namespace

double calibrated_reflection_coefficient(const SceneConfig& cfg, const Vec3& src) {
  if (cfg.t60 <= 0.0) return 0.0;
  const double fs = cfg.sample_rate_hz;
  const Vec3 mic = cfg.array_center;
  const std::size_t length =
      static_cast<std::size_t>(std::ceil(distance(src, mic) / kSpeedOfSound * fs + cfg.t60 * fs)) + 1;
  std::vector<ImageSource> images;
  for_each_image(cfg, src, mic, length, true, [&](const ImageSource& im) { images.push_back(im); });

  // Decay time grows monotonically with beta; bisect on log(beta) starting
  // from the Eyring estimate.
  const double eyring = reflection_coefficient(cfg.room_dims, cfg.t60);
  double lo = std::log(eyring) * 4.0, hi = std::log(eyring) * 0.25;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (image_decay_time(images, std::exp(mid), length, fs) > cfg.t60)
      hi = mid;
    else
      lo = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

Rir simulate_rir(const SceneConfig& cfg, const Vec3& src) {
  cfg.validate();
  if (!inside(src, cfg.room_dims)) throw ValidationError("source_position", "source must lie inside the room");
  const double fs = cfg.sample_rate_hz;
  const auto mics = cfg.mic_positions();
  const double beta = calibrated_reflection_coefficient(cfg, src);

  double direct_max = 0.0;
  for (const auto& m : mics) direct_max = std::max(direct_max, distance(src, m) / kSpeedOfSound * fs);
  const std::size_t length =
      static_cast<std::size_t>(std::ceil(direct_max + cfg.t60 * fs)) + kFractionalDelayTaps;

  Rir rir;
  rir.sample_rate_hz = cfg.sample_rate_hz;
  rir.taps.assign(2, std::vector<double>(length, 0.0));
  for (std::size_t q = 0; q < 2; ++q) {
    for_each_image(cfg, src, mics[q], length, cfg.t60 > 0.0, [&](const ImageSource& im) {
      add_impulse(rir.taps[q], im.delay, std::pow(beta, im.reflections) / im.distance);
    });
    if (cfg.t60 > 0.0) remove_dc_buildup(rir.taps[q], fs);
  }
  return rir;
}

AudioClip diffuse_noise(const AudioClip& seed_clip, const SceneConfig& cfg, const DiffuseNoiseConfig& diffuse) {
  if (seed_clip.empty()) throw PreconditionError("diffuse_noise: empty seed clip");
  if (diffuse.num_directions < 1) throw ValidationError("num_directions", "must be >= 1");
  const std::size_t n = seed_clip.num_samples();
  const double fs = cfg.sample_rate_hz;
  const auto mics = cfg.mic_positions();
  const auto k_dirs = static_cast<std::size_t>(diffuse.num_directions);
  const double amplitude = 1.0 / std::sqrt(static_cast<double>(k_dirs));

  // Every direction plays a circularly shifted copy of the seed through a
  // far-field delay; both operations fold into one circular filter per mic.
  RealFft fft(n);
  std::vector<std::complex<double>> spectrum(fft.bins()), filter_spec(fft.bins());
  fft.forward(seed_clip.channel(0), spectrum);

  std::vector<std::vector<double>> out(2, std::vector<double>(n, 0.0));
  std::vector<double> filter(n);
  std::vector<std::complex<double>> product(fft.bins());
  for (std::size_t q = 0; q < 2; ++q) {
    std::fill(filter.begin(), filter.end(), 0.0);
    const double rel_x = mics[q][0] - cfg.array_center[0];
    const double rel_y = mics[q][1] - cfg.array_center[1];
    for (std::size_t k = 0; k < k_dirs; ++k) {
      const double phi = (diffuse.start_angle_deg + 360.0 * static_cast<double>(k) / static_cast<double>(k_dirs)) *
                         kDegToRad;
      const std::size_t shift = k * n / k_dirs;
      const double delay = kHalfKernel - (rel_x * std::cos(phi) + rel_y * std::sin(phi)) / kSpeedOfSound * fs;
      const long center = std::lround(delay);
      for (long t = center - kHalfKernel; t <= center + kHalfKernel; ++t) {
        const long idx = ((t + static_cast<long>(shift)) % static_cast<long>(n) + static_cast<long>(n)) %
                         static_cast<long>(n);
        filter[static_cast<std::size_t>(idx)] += amplitude * fractional_tap(static_cast<double>(t) - delay);
      }
    }
    fft.forward(filter, filter_spec);
    for (std::size_t b = 0; b < product.size(); ++b) product[b] = spectrum[b] * filter_spec[b];
    fft.inverse(product, out[q]);
  }
  return AudioClip(std::move(out), seed_clip.sample_rate_hz());
}

std::vector<bool> speech_active_mask(std::span<const double> clean, std::size_t frame_len) {
  std::vector<bool> mask(clean.size(), false);
  if (clean.empty()) return mask;
  const std::size_t frames = (clean.size() + frame_len - 1) / frame_len;
  std::vector<double> energy(frames, 0.0);
  for (std::size_t i = 0; i < clean.size(); ++i) energy[i / frame_len] += clean[i] * clean[i];
  const double peak = *std::max_element(energy.begin(), energy.end());
  if (peak <= 0.0) return mask;
  for (std::size_t i = 0; i < clean.size(); ++i) mask[i] = energy[i / frame_len] > peak * 1e-4;
  return mask;
}

namespace {

LabeledMixture combine(const SceneConfig& cfg, std::vector<std::vector<double>> images, const AudioClip& noise_mono) {
  const std::size_t n = images[0].size();
  AudioClip noise_seed = AudioClip::mono(fit_length(noise_mono.channel(0), n), noise_mono.sample_rate_hz());
  AudioClip noise = diffuse_noise(noise_seed, cfg);

  const auto mask = speech_active_mask(images[0]);
  double e_speech = 0.0, e_noise = 0.0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) {
        e_speech += images[c][i] * images[c][i];
        e_noise += noise.channel(c)[i] * noise.channel(c)[i];
      }
  if (!(e_speech > 0.0)) throw PreconditionError("make_mixture: speech image is silent");
  if (!(e_noise > 0.0)) throw PreconditionError("make_mixture: noise is silent in the speech-active region");
  const double gain = std::sqrt(e_speech / (e_noise * std::pow(10.0, cfg.snr_db / 10.0)));

  std::vector<std::vector<double>> noise_ch(2, std::vector<double>(n)), mix(2, std::vector<double>(n));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      images[c][i] = quantize(images[c][i]);
      noise_ch[c][i] = quantize(gain * noise.channel(c)[i]);
      mix[c][i] = images[c][i] + noise_ch[c][i];
    }

  LabeledMixture out;
  out.mixture = AudioClip(std::move(mix), cfg.sample_rate_hz);
  out.clean_speech_at_mics = AudioClip(std::move(images), cfg.sample_rate_hz);
  out.noise_at_mics = AudioClip(std::move(noise_ch), cfg.sample_rate_hz);
  out.true_angle_deg = cfg.source_angle_deg;
  out.snr_db = cfg.snr_db;
  return out;
}

}  // namespace

LabeledMixture make_mixture(const SceneConfig& cfg, const AudioClip& speech, const AudioClip& noise) {
  cfg.validate();
  if (speech.empty() || noise.empty()) throw PreconditionError("make_mixture: empty speech or noise");
  if (speech.sample_rate_hz() != cfg.sample_rate_hz || noise.sample_rate_hz() != cfg.sample_rate_hz)
    throw PreconditionError("make_mixture: speech and noise must be at the scene rate");
  const Rir rir = simulate_rir(cfg, cfg.source_position());
  std::vector<std::vector<double>> images(2);
  for (std::size_t q = 0; q < 2; ++q) {
    images[q] = fft_convolve(speech.channel(0), rir.taps[q]);
    images[q].resize(speech.num_samples());
  }
  return combine(cfg, std::move(images), noise);
}

LabeledMixture simulate_scene(const SceneConfig& cfg, double duration_s) {
  cfg.validate();
  const auto speech = AudioClip::mono(synth_speech(duration_s, derive_seed(cfg.seed, "speech"), cfg.sample_rate_hz),
                                      cfg.sample_rate_hz);
  const auto noise = AudioClip::mono(
      generate_noise(cfg.noise_kind, duration_s, derive_seed(cfg.seed, "noise"), cfg.sample_rate_hz),
      cfg.sample_rate_hz);
  return make_mixture(cfg, speech, noise);
}

double MovingSourceScene::angle_at(std::size_t n) const {
  const auto seg = static_cast<std::size_t>(static_cast<double>(n) /
                                            (segment_s * mixture.mixture.sample_rate_hz()));
  return segment_angles_deg.at(std::min(seg, segment_angles_deg.size() - 1));
}

MovingSourceScene simulate_moving_source(const SceneConfig& cfg, std::span<const double> angles_deg,
                                         double segment_s) {
  if (angles_deg.empty()) throw PreconditionError("simulate_moving_source: no angles");
  if (!(segment_s > 0.0)) throw ValidationError("segment_s", "must be positive");
  cfg.validate();
  const double total_s = segment_s * static_cast<double>(angles_deg.size());
  const auto speech = synth_speech(total_s, derive_seed(cfg.seed, "speech"), cfg.sample_rate_hz);
  const std::size_t n = speech.size();
  const auto seg_len = static_cast<std::size_t>(std::llround(segment_s * cfg.sample_rate_hz));

  std::vector<std::vector<double>> images(2, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < angles_deg.size(); ++s) {
    SceneConfig seg_cfg = cfg;
    seg_cfg.source_angle_deg = angles_deg[s];
    seg_cfg.validate();
    const Rir rir = simulate_rir(seg_cfg, seg_cfg.source_position());
    const std::size_t begin = s * seg_len;
    if (begin >= n) break;
    const std::size_t count = std::min(seg_len, n - begin);
    const std::span<const double> piece(speech.data() + begin, count);
    for (std::size_t q = 0; q < 2; ++q) {
      const auto img = fft_convolve(piece, rir.taps[q]);
      for (std::size_t i = 0; i < img.size() && begin + i < n; ++i) images[q][begin + i] += img[i];
    }
  }
  const auto noise = AudioClip::mono(
      generate_noise(cfg.noise_kind, total_s, derive_seed(cfg.seed, "noise"), cfg.sample_rate_hz),
      cfg.sample_rate_hz);

  MovingSourceScene scene;
  scene.mixture = combine(cfg, std::move(images), noise);
  scene.mixture.true_angle_deg = angles_deg.front();
  scene.segment_angles_deg.assign(angles_deg.begin(), angles_deg.end());
  scene.segment_s = segment_s;
  return scene;
}

}  // namespace bssgate
