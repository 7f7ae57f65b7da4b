#include "bssgate/bench.hpp"

#include <chrono>

#include "json.hpp"

namespace bssgate {

SceneConfig BenchOptions::default_scene() {
  SceneConfig cfg;
  cfg.t60 = 0.2;
  cfg.snr_db = 10.0;
  cfg.seed = 2024;
  return cfg;
}

PipelineConfig BenchOptions::ground_truth_pipeline() {
  PipelineConfig cfg;
  cfg.doa_source = DoaSource::kGroundTruth;
  return cfg;
}

BenchResult run_bench(const BenchOptions& options, std::shared_ptr<const FnnModel> model) {
  const auto t0 = std::chrono::steady_clock::now();
  const MovingSourceScene scene = simulate_moving_source(options.scene, options.angles_deg, options.segment_s);
  const auto labels = truth_frame_labels(scene, options.pipeline.stft);

  ReportOptions report;
  report.accounting_frame_ms = options.accounting_frame_ms;

  BenchResult out;
  for (std::size_t i = 1; i < options.angles_deg.size(); ++i)
    out.changes += angle_to_class(options.angles_deg[i]) != angle_to_class(options.angles_deg[i - 1]);

  PipelineConfig cfg = options.pipeline;
  cfg.mode = options.subject;
  out.subject_stats = run_stream(scene.mixture.mixture, cfg, model, labels).stats;
  cfg.mode = options.baseline;
  out.baseline_stats = run_stream(scene.mixture.mixture, cfg, model, labels).stats;

  out.subject = complexity_report(out.subject_stats, report);
  out.baseline = complexity_report(out.baseline_stats, report);
  out.ratio = out.subject.accounted_updates > 0
                  ? static_cast<double>(out.baseline.accounted_updates) / static_cast<double>(out.subject.accounted_updates)
                  : 0.0;
  out.real_time_ok = out.subject.real_time_ok;
  out.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::string bench_to_json(const BenchResult& r) {
  nlohmann::json j;
  j["subject"] = nlohmann::json::parse(report_to_json(r.subject));
  j["baseline"] = nlohmann::json::parse(report_to_json(r.baseline));
  j["subject_trigger_frames"] = r.subject_stats.trigger_frames;
  j["ratio"] = r.ratio;
  j["real_time_ok"] = r.real_time_ok;
  j["angle_changes"] = r.changes;
  j["wall_s"] = r.wall_s;
  return j.dump(2);
}

}  // namespace bssgate
