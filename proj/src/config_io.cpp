#include "bssgate/config_io.hpp"

#include "bssgate/errors.hpp"
#include "json.hpp"

namespace bssgate {

using nlohmann::json;

namespace {

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(what, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError(what, "expected a JSON object");
  return j;
}

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(key, "wrong type");
  }
}

void read_vec3(const json& j, const char* key, Vec3& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw ValidationError(key, "expected [x, y, z]");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw ValidationError(key, "expected numbers");
    out[i] = v[i].get<double>();
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known) {
  for (const auto& item : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || item.key() == k;
    if (!found) throw ValidationError(item.key(), "unknown configuration key");
  }
}

}  // namespace

std::string scene_config_to_json(const SceneConfig& cfg) {
  json j{{"room_dims", cfg.room_dims},
         {"t60", cfg.t60},
         {"mic_spacing", cfg.mic_spacing},
         {"array_center", cfg.array_center},
         {"source_angle_deg", cfg.source_angle_deg},
         {"source_distance", cfg.source_distance},
         {"snr_db", cfg.snr_db},
         {"noise_kind", to_string(cfg.noise_kind)},
         {"seed", cfg.seed},
         {"sample_rate_hz", cfg.sample_rate_hz}};
  return j.dump(2);
}

SceneConfig scene_config_from_json(const std::string& text) {
  const json j = parse_object(text, "scene");
  reject_unknown(j, {"room_dims", "t60", "mic_spacing", "array_center", "source_angle_deg", "source_distance",
                     "snr_db", "noise_kind", "seed", "sample_rate_hz"});
  SceneConfig cfg;
  read_vec3(j, "room_dims", cfg.room_dims);
  read_key(j, "t60", cfg.t60);
  read_key(j, "mic_spacing", cfg.mic_spacing);
  read_vec3(j, "array_center", cfg.array_center);
  read_key(j, "source_angle_deg", cfg.source_angle_deg);
  read_key(j, "source_distance", cfg.source_distance);
  read_key(j, "snr_db", cfg.snr_db);
  if (j.contains("noise_kind")) {
    std::string kind;
    read_key(j, "noise_kind", kind);
    cfg.noise_kind = parse_noise_kind(kind);
  }
  read_key(j, "seed", cfg.seed);
  read_key(j, "sample_rate_hz", cfg.sample_rate_hz);
  cfg.validate();
  return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  json j{{"mode", to_string(cfg.mode)},
         {"doa_source", cfg.doa_source == DoaSource::kFnn ? "fnn" : "ground_truth"},
         {"weighting", cfg.weighting == CorrelationWeighting::kPlain ? "plain" : "phat"},
         {"mic_spacing", cfg.mic_spacing},
         {"per_frame_max_iters", cfg.per_frame_max_iters},
         {"warmup_voice_frames", cfg.warmup_voice_frames},
         {"install_delay_frames", cfg.install_delay_frames},
         {"execution", cfg.execution == UpdateExecution::kBackground ? "background" : "synchronous"},
         {"force_gate_open", cfg.force_gate_open},
         {"iva",
          {{"eta", cfg.iva.eta},
           {"max_iters", cfg.iva.max_iters},
           {"tol", cfg.iva.tol},
           {"buffer_frames", cfg.iva.buffer_frames},
           {"max_condition", cfg.iva.max_condition},
           {"divergence_ratio", cfg.iva.divergence_ratio}}},
         {"vad",
          {{"threshold_db", cfg.vad.threshold_db},
           {"max_hangover", cfg.vad.max_hangover},
           {"alpha", cfg.vad.alpha},
           {"min_floor", cfg.vad.min_floor}}},
         {"stft", {{"frame_len", cfg.stft.frame_len}, {"hop", cfg.stft.hop}, {"fft_size", cfg.stft.fft_size}}}};
  return j.dump(2);
}

PipelineConfig pipeline_config_from_json(const std::string& text, PipelineConfig cfg) {
  const json j = parse_object(text, "pipeline");
  reject_unknown(j, {"mode", "doa_source", "weighting", "mic_spacing", "per_frame_max_iters", "warmup_voice_frames",
                     "install_delay_frames", "execution", "force_gate_open", "iva", "vad", "stft"});
  if (j.contains("mode")) {
    std::string mode;
    read_key(j, "mode", mode);
    cfg.mode = parse_pipeline_mode(mode);
  }
  if (j.contains("doa_source")) {
    std::string s;
    read_key(j, "doa_source", s);
    if (s == "fnn")
      cfg.doa_source = DoaSource::kFnn;
    else if (s == "ground_truth")
      cfg.doa_source = DoaSource::kGroundTruth;
    else
      throw ValidationError("doa_source", "expected fnn or ground_truth");
  }
  if (j.contains("weighting")) {
    std::string s;
    read_key(j, "weighting", s);
    if (s == "plain")
      cfg.weighting = CorrelationWeighting::kPlain;
    else if (s == "phat")
      cfg.weighting = CorrelationWeighting::kPhat;
    else
      throw ValidationError("weighting", "expected plain or phat");
  }
  if (j.contains("execution")) {
    std::string s;
    read_key(j, "execution", s);
    if (s == "background")
      cfg.execution = UpdateExecution::kBackground;
    else if (s == "synchronous")
      cfg.execution = UpdateExecution::kSynchronous;
    else
      throw ValidationError("execution", "expected background or synchronous");
  }
  read_key(j, "mic_spacing", cfg.mic_spacing);
  read_key(j, "per_frame_max_iters", cfg.per_frame_max_iters);
  read_key(j, "warmup_voice_frames", cfg.warmup_voice_frames);
  read_key(j, "install_delay_frames", cfg.install_delay_frames);
  read_key(j, "force_gate_open", cfg.force_gate_open);
  if (j.contains("iva")) {
    const auto& s = j.at("iva");
    reject_unknown(s, {"eta", "max_iters", "tol", "buffer_frames", "max_condition", "divergence_ratio"});
    read_key(s, "eta", cfg.iva.eta);
    read_key(s, "max_iters", cfg.iva.max_iters);
    read_key(s, "tol", cfg.iva.tol);
    read_key(s, "buffer_frames", cfg.iva.buffer_frames);
    read_key(s, "max_condition", cfg.iva.max_condition);
    read_key(s, "divergence_ratio", cfg.iva.divergence_ratio);
  }
  if (j.contains("vad")) {
    const auto& s = j.at("vad");
    reject_unknown(s, {"threshold_db", "max_hangover", "alpha", "min_floor"});
    read_key(s, "threshold_db", cfg.vad.threshold_db);
    read_key(s, "max_hangover", cfg.vad.max_hangover);
    read_key(s, "alpha", cfg.vad.alpha);
    read_key(s, "min_floor", cfg.vad.min_floor);
  }
  if (j.contains("stft")) {
    const auto& s = j.at("stft");
    reject_unknown(s, {"frame_len", "hop", "fft_size"});
    read_key(s, "frame_len", cfg.stft.frame_len);
    read_key(s, "hop", cfg.stft.hop);
    read_key(s, "fft_size", cfg.stft.fft_size);
    cfg.stft.window = sqrt_hann_periodic(cfg.stft.frame_len);
  }
  cfg.validate();
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j{{"step", cfg.step},
         {"beta1", cfg.beta1},
         {"beta2", cfg.beta2},
         {"epsilon", cfg.epsilon},
         {"batch_size", cfg.batch_size},
         {"epochs", cfg.epochs},
         {"validation_fraction", cfg.validation_fraction},
         {"use_bias", cfg.use_bias},
         {"seed", cfg.seed}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig cfg) {
  const json j = parse_object(text, "train");
  reject_unknown(j, {"step", "beta1", "beta2", "epsilon", "batch_size", "epochs", "validation_fraction", "use_bias",
                     "seed"});
  read_key(j, "step", cfg.step);
  read_key(j, "beta1", cfg.beta1);
  read_key(j, "beta2", cfg.beta2);
  read_key(j, "epsilon", cfg.epsilon);
  read_key(j, "batch_size", cfg.batch_size);
  read_key(j, "epochs", cfg.epochs);
  read_key(j, "validation_fraction", cfg.validation_fraction);
  read_key(j, "use_bias", cfg.use_bias);
  read_key(j, "seed", cfg.seed);
  if (!(cfg.step > 0.0)) throw ValidationError("step", "must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) throw ValidationError("beta1", "must lie in [0, 1)");
  if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) throw ValidationError("beta2", "must lie in [0, 1)");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("epsilon", "must be positive");
  if (cfg.batch_size == 0) throw ValidationError("batch_size", "must be positive");
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
    throw ValidationError("validation_fraction", "must lie in [0, 1)");
  return cfg;
}

}  // namespace bssgate
