#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bssgate {

enum class NoiseKind { kBabble, kMachinery, kWhite };

NoiseKind parse_noise_kind(const std::string& name);
std::string to_string(NoiseKind kind);

// Speech-like test signal: voiced syllables (harmonic source through three
// formant resonators, gliding pitch) and occasional fricatives, grouped into
// words separated by pauses. Peak-normalized to 0.5.
std::vector<double> synth_speech(double duration_s, std::uint64_t seed, int sample_rate_hz = 16000);

// Sum of six independent synthetic talkers, unit RMS.
std::vector<double> babble_noise(double duration_s, std::uint64_t seed, int sample_rate_hz = 16000);

// Engine-like noise: 50 Hz harmonic hum, low-passed rumble and an 8 Hz
// amplitude modulation. Unit RMS.
std::vector<double> machinery_noise(double duration_s, std::uint64_t seed, int sample_rate_hz = 16000);

// Gaussian white noise, unit variance.
std::vector<double> white_noise(double duration_s, std::uint64_t seed, int sample_rate_hz = 16000);

std::vector<double> generate_noise(NoiseKind kind, double duration_s, std::uint64_t seed,
                                   int sample_rate_hz = 16000);

}  // namespace bssgate
