#include "bssgate/vad.hpp"

#include <algorithm>
#include <cmath>

#include "bssgate/errors.hpp"

namespace bssgate {

void VadConfig::validate() const {
  if (!std::isfinite(threshold_db)) throw ValidationError("vad.threshold_db", "must be finite");
  if (max_hangover < 0) throw ValidationError("vad.hangover", "must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("vad.alpha", "must lie in (0, 1)");
  if (!(min_floor >= 0.0)) throw ValidationError("vad.min_floor", "must be >= 0");
}

VadState::VadState(VadConfig cfg) : config(cfg) { config.validate(); }

VadDecision vad_decide(VadState& state, std::span<const double> frame) {
  if (frame.empty()) throw PreconditionError("vad_decide: empty frame");
  double energy = 0.0;
  for (double v : frame) energy += v * v;
  energy /= static_cast<double>(frame.size());

  VadDecision out{false, energy};
  if (!state.initialized) {
    state.noise_floor = energy;
    state.initialized = true;
    return out;
  }

  const double floor = std::max(state.noise_floor, state.config.min_floor);
  const bool energetic = energy > floor * std::pow(10.0, state.config.threshold_db / 10.0);
  if (energetic) {
    state.hangover = state.config.max_hangover;
    out.voice = true;
  } else if (state.hangover > 0) {
    --state.hangover;
    out.voice = true;
  }
  if (!out.voice) state.noise_floor = state.config.alpha * state.noise_floor + (1.0 - state.config.alpha) * energy;
  return out;
}

}  // namespace bssgate
