#pragma once

#include <span>

namespace bssgate {

struct VadConfig {
  double threshold_db = 6.0;
  int max_hangover = 8;
  double alpha = 0.95;
  // Absolute floor on the noise estimate (mean-square units) so that digital
  // silence does not make every later frame "voice".
  double min_floor = 1e-10;

  void validate() const;
};

// Energy-over-adaptive-floor detector with hangover.
struct VadState {
  double noise_floor = 0.0;
  int hangover = 0;
  bool initialized = false;
  VadConfig config;

  explicit VadState(VadConfig cfg = {});
};

struct VadDecision {
  bool voice = false;
  double frame_energy = 0.0;
};

// Mean-square frame energy is compared to floor * 10^(threshold_db / 10).
// The floor tracks energy only on non-voice decisions. The first frame seeds
// the floor and is reported as non-voice.
VadDecision vad_decide(VadState& state, std::span<const double> frame);

}  // namespace bssgate
