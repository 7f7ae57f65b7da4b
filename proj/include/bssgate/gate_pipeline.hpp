#pragma once

#include <array>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "bssgate/audio_io.hpp"
#include "bssgate/doa.hpp"
#include "bssgate/iva.hpp"
#include "bssgate/vad.hpp"

namespace bssgate {

struct MovingSourceScene;

// ---------------------------------------------------------------------------
// Change gate

// Labels of the most recent voice frames, oldest first. Capacity 10.
class DoaHistory {
 public:
  static constexpr std::size_t kCapacity = 10;
  static constexpr std::size_t kWindow = 5;

  void push(int label);
  void clear() noexcept { size_ = 0; head_ = 0; }
  std::size_t size() const noexcept { return size_; }
  bool full() const noexcept { return size_ == kCapacity; }
  // i = 0 is the oldest retained label.
  int operator[](std::size_t i) const;
  std::vector<int> labels() const;

 private:
  std::array<int, kCapacity> ring_{};
  std::size_t head_ = 0;  // index of the oldest entry
  std::size_t size_ = 0;
};

// The label that occurs in at least 4 of the 5 entries, if any.
std::optional<int> majority_label(std::span<const int> window);

struct GateDecision {
  bool update = false;
  int old_label = -1;
  int new_label = -1;
};

// Fires when the older and newer 5-frame windows of a full history both have
// a 4-of-5 majority and the two majorities differ.
GateDecision should_update(const DoaHistory& history);

// ---------------------------------------------------------------------------
// Pipeline

enum class PipelineMode { kGated, kPerFrame, kBatchOffline };
enum class DoaSource { kFnn, kGroundTruth };
enum class UpdateExecution { kSynchronous, kBackground };

std::string to_string(PipelineMode mode);
PipelineMode parse_pipeline_mode(const std::string& name);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::kGated;
  StftConfig stft = StftConfig::standard();
  IvaConfig iva;
  VadConfig vad;
  DoaSource doa_source = DoaSource::kFnn;
  CorrelationWeighting weighting = CorrelationWeighting::kPlain;
  double mic_spacing = 0.13;
  // Iterations per update in per-frame mode.
  int per_frame_max_iters = 2;
  // Voice frames before the mandatory first update.
  std::size_t warmup_voice_frames = 10;
  // Gated updates computed from a snapshot at frame n are swapped in at frame
  // n + install_delay_frames. Must not exceed the 10-frame history so that
  // at most one update is in flight.
  std::size_t install_delay_frames = 10;
  UpdateExecution execution = UpdateExecution::kBackground;
  // Testing hook: treat every voice frame as a gate trigger.
  bool force_gate_open = false;

  void validate() const;
};

struct UpdateStats {
  PipelineMode mode = PipelineMode::kGated;
  std::size_t frames_processed = 0;
  std::size_t voice_frames = 0;
  std::size_t updates_triggered = 0;  // includes the warm-up update
  std::size_t warmup_updates = 0;
  std::size_t failed_updates = 0;
  std::size_t num_samples = 0;
  int sample_rate_hz = kCanonicalRateHz;
  std::vector<double> per_frame_wall_us;
  std::vector<double> update_wall_us;
  std::vector<bool> voice_flags;
  std::vector<bool> triggered_flags;
  std::vector<int> doa_labels;  // -1 for non-voice or degenerate frames
  std::vector<std::size_t> trigger_frames;
  std::vector<std::string> events;
};

struct FrameOutcome {
  bool voice = false;
  int label = -1;
  bool triggered = false;
  bool installed = false;
};

// Streaming separator for one 2-channel stream: VAD, DOA classification,
// change gate, conditional IVA update and demixing, one 20 ms frame at a time.
// After construction the per-frame path does not allocate (the statistics
// vectors are reserved through reserve_frames()).
class SeparationPipeline {
 public:
  SeparationPipeline(PipelineConfig cfg, std::shared_ptr<const FnnModel> model);
  ~SeparationPipeline();
  SeparationPipeline(const SeparationPipeline&) = delete;
  SeparationPipeline& operator=(const SeparationPipeline&) = delete;

  void reserve_frames(std::size_t n);

  // `ch1`, `ch2`: one analysis frame (frame_len samples each). Writes the hop
  // of finished output samples that this frame completes.
  FrameOutcome process_frame(std::span<const double> ch1, std::span<const double> ch2, std::span<double> out_hop,
                             std::optional<int> truth_label = std::nullopt);
  // Remaining frame_len - hop samples; also waits for any update in flight.
  void flush(std::span<double> out_tail);

  const UpdateStats& stats() const noexcept { return stats_; }
  const DemixingStack& stack() const noexcept { return stack_; }
  std::size_t speech_channel() const noexcept { return speech_channel_; }
  const PipelineConfig& config() const noexcept { return cfg_; }

 private:
  struct Job;
  class Worker;

  void trigger_update(bool warmup, std::size_t frame);
  void install_pending();
  static void compute_update(Job& job);

  PipelineConfig cfg_;
  std::shared_ptr<const FnnModel> model_;
  StftAnalyzer analyzer_;
  OverlapAddSynthesizer synth_;
  VadState vad_;
  DoaHistory history_;
  DemixingStack stack_;
  std::size_t speech_channel_ = 0;

  SpectralFrame frame_;
  SourceEstimate demixed_;
  std::vector<SpectralFrame> ring_;
  std::vector<bool> ring_voice_;
  std::size_t ring_head_ = 0;
  std::size_t ring_size_ = 0;

  std::unique_ptr<Job> job_;
  std::unique_ptr<Worker> worker_;
  bool pending_ = false;
  std::size_t install_frame_ = 0;
  bool warmed_up_ = false;

  UpdateStats stats_;
};

struct StreamResult {
  AudioClip separated;  // mono, aligned with the input
  UpdateStats stats;
  DemixingStack final_stack;
};

// Runs the whole clip in the configured mode. `truth_labels` (one per STFT
// frame) is required when cfg.doa_source is kGroundTruth.
StreamResult run_stream(const AudioClip& clip, const PipelineConfig& cfg, std::shared_ptr<const FnnModel> model,
                        std::span<const int> truth_labels = {});

// DOA class of the true angle at each frame center.
std::vector<int> truth_frame_labels(const MovingSourceScene& scene, const StftConfig& stft);

// ---------------------------------------------------------------------------
// Complexity accounting

struct ReportOptions {
  // Length of the accounting frames; 0 counts processing frames instead.
  double accounting_frame_ms = 0.0;
  double budget_ms = 20.0;
};

struct ComplexityReport {
  PipelineMode mode = PipelineMode::kGated;
  std::size_t frames = 0;
  std::size_t voice_frames = 0;
  std::size_t updates_triggered = 0;
  std::size_t warmup_updates = 0;
  std::size_t accounting_frames = 0;
  // Updates charged to this run in accounting units: gated runs are charged
  // their change-triggered updates (at least one, the warm-up), per-frame runs
  // one update per accounting frame.
  std::size_t accounted_updates = 0;
  double update_ratio = 0.0;  // accounting_frames / accounted_updates
  double p50_frame_ms = 0.0;
  double p95_frame_ms = 0.0;
  double max_frame_ms = 0.0;
  double steady_p50_frame_ms = 0.0;
  double steady_p95_frame_ms = 0.0;
  double steady_max_frame_ms = 0.0;
  double max_update_ms = 0.0;
  bool real_time_ok = false;
};

ComplexityReport complexity_report(const UpdateStats& stats, const ReportOptions& options = {});

std::string stats_to_json(const UpdateStats& stats);
std::string report_to_json(const ComplexityReport& report);
void write_timing_csv(const UpdateStats& stats, const std::filesystem::path& path);

}  // namespace bssgate
