#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bssgate/gate_pipeline.hpp"
#include "bssgate/room_sim.hpp"

namespace bssgate {

// The moving-source complexity scenario: one talker that jumps to a new grid
// angle every segment, run once in `subject` mode and once in `baseline` mode
// on the same mixture and labels.
struct BenchOptions {
  std::vector<double> angles_deg{90.0, 120.0, 60.0, 150.0, 30.0};
  double segment_s = 3.0;
  SceneConfig scene = default_scene();
  PipelineConfig pipeline = ground_truth_pipeline();
  PipelineMode subject = PipelineMode::kGated;
  PipelineMode baseline = PipelineMode::kPerFrame;
  double accounting_frame_ms = 100.0;

  static SceneConfig default_scene();
  static PipelineConfig ground_truth_pipeline();
};

struct BenchResult {
  ComplexityReport subject;
  ComplexityReport baseline;
  UpdateStats subject_stats;
  UpdateStats baseline_stats;
  // baseline accounted updates / subject accounted updates
  double ratio = 0.0;
  bool real_time_ok = false;  // subject run, every frame under the budget
  double wall_s = 0.0;
  std::size_t changes = 0;  // angle changes in the scenario
};

// FNN-driven runs pass the model; ground-truth runs may pass nullptr.
BenchResult run_bench(const BenchOptions& options, std::shared_ptr<const FnnModel> model = nullptr);

std::string bench_to_json(const BenchResult& result);

}  // namespace bssgate
