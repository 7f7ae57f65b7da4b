#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "bssgate/audio_io.hpp"
#include "bssgate/signals.hpp"

namespace bssgate {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

using Vec3 = std::array<double, 3>;

// Two-microphone shoebox scene. The microphone axis is parallel to x: mic 1
// sits at array_center + (d/2, 0, 0), mic 2 at array_center - (d/2, 0, 0).
// The source lies in the horizontal plane at source_angle_deg from the +x
// axis, so 0 deg is endfire on the mic-1 side and 90 deg is broadside.
struct SceneConfig {
  Vec3 room_dims{6.0, 5.0, 3.0};
  double t60 = 0.0;
  double mic_spacing = 0.13;
  Vec3 array_center{3.0, 1.5, 1.5};
  double source_angle_deg = 90.0;
  double source_distance = 2.5;
  double snr_db = 5.0;
  NoiseKind noise_kind = NoiseKind::kBabble;
  std::uint64_t seed = 0;
  int sample_rate_hz = kCanonicalRateHz;

  // Throws ValidationError naming the offending field.
  void validate() const;
  Vec3 source_position() const;
  std::array<Vec3, 2> mic_positions() const;
};

struct Rir {
  std::vector<std::vector<double>> taps;  // [mic][tap]
  int sample_rate_hz = kCanonicalRateHz;
};

// Length of the windowed-sinc fractional delay kernel.
inline constexpr std::size_t kFractionalDelayTaps = 81;

// Frequency-independent wall reflection coefficient that yields `t60` in the
// given room (Eyring). Returns 0 for t60 == 0.
double reflection_coefficient(const Vec3& room_dims, double t60);

// Reflection coefficient for which the image-source energy decay of this
// source and the array centre, measured by Schroeder integration, matches
// cfg.t60. The Eyring value decays too slowly in a shoebox image model.
double calibrated_reflection_coefficient(const SceneConfig& cfg, const Vec3& source_position);

// Reverberant responses are high-passed at 100 Hz to remove the DC build-up
// of the all-positive image amplitudes.
Rir simulate_rir(const SceneConfig& cfg, const Vec3& source_position);

struct LabeledMixture {
  AudioClip mixture;               // 2 ch
  AudioClip clean_speech_at_mics;  // 2 ch reverberant speech image
  AudioClip noise_at_mics;         // 2 ch
  double true_angle_deg = 0.0;
  double snr_db = 0.0;
};

struct DiffuseNoiseConfig {
  int num_directions = 36;
  double start_angle_deg = 0.0;
};

// Far-field rendering of a mono noise clip from `num_directions` equally
// spaced horizontal directions, each fed by a different circular shift of the
// seed clip.
AudioClip diffuse_noise(const AudioClip& noise_seed_clip, const SceneConfig& cfg,
                        const DiffuseNoiseConfig& diffuse = {});

// Samples whose clean-image frame energy lies within 40 dB of the loudest
// frame (320-sample frames, mic 1).
std::vector<bool> speech_active_mask(std::span<const double> clean_image, std::size_t frame_len = 320);

LabeledMixture make_mixture(const SceneConfig& cfg, const AudioClip& speech, const AudioClip& noise);

// Convenience: synthesizes speech and noise from the scene seed.
LabeledMixture simulate_scene(const SceneConfig& cfg, double duration_s);

// A source that jumps between angles every `segment_s` seconds. The speech
// images of consecutive segments overlap-add so reverberant tails carry over
// into the next segment; a single diffuse noise field spans the whole clip.
struct MovingSourceScene {
  LabeledMixture mixture;
  std::vector<double> segment_angles_deg;
  double segment_s = 0.0;

  // Ground-truth angle at sample index n.
  double angle_at(std::size_t n) const;
};
MovingSourceScene simulate_moving_source(const SceneConfig& cfg, std::span<const double> angles_deg,
                                         double segment_s);

}  // namespace bssgate
