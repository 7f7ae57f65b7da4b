#pragma once

#include <string>

#include "bssgate/doa.hpp"
#include "bssgate/gate_pipeline.hpp"
#include "bssgate/room_sim.hpp"

namespace bssgate {

// Key-value JSON. Unknown keys raise ValidationError; missing keys keep the
// defaults.
std::string scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const std::string& text);

std::string pipeline_config_to_json(const PipelineConfig& cfg);
// Applies the keys present in `text` on top of `base`.
PipelineConfig pipeline_config_from_json(const std::string& text, PipelineConfig base = {});

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});

}  // namespace bssgate
