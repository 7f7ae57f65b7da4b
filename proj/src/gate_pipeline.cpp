#include "bssgate/gate_pipeline.hpp"

#include <pthread.h>
#include <sched.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "bssgate/errors.hpp"
#include "bssgate/room_sim.hpp"
#include "json.hpp"

namespace bssgate {

using Clock = std::chrono::steady_clock;

namespace {

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Change gate

void DoaHistory::push(int label) {
  if (size_ < kCapacity) {
    ring_[(head_ + size_) % kCapacity] = label;
    ++size_;
  } else {
    ring_[head_] = label;
    head_ = (head_ + 1) % kCapacity;
  }
}

int DoaHistory::operator[](std::size_t i) const {
  if (i >= size_) throw PreconditionError("DoaHistory index out of range");
  return ring_[(head_ + i) % kCapacity];
}

std::vector<int> DoaHistory::labels() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < size_; ++i) out.push_back((*this)[i]);
  return out;
}

std::optional<int> majority_label(std::span<const int> window) {
  if (window.size() != DoaHistory::kWindow) throw PreconditionError("majority_label: expected exactly 5 labels");
  for (std::size_t i = 0; i < window.size(); ++i) {
    const auto count = std::count(window.begin(), window.end(), window[i]);
    if (count >= 4) return window[i];
  }
  return std::nullopt;
}

GateDecision should_update(const DoaHistory& history) {
  if (!history.full()) return {};
  std::array<int, DoaHistory::kWindow> older{}, newer{};
  for (std::size_t i = 0; i < DoaHistory::kWindow; ++i) {
    older[i] = history[i];
    newer[i] = history[i + DoaHistory::kWindow];
  }
  const auto a = majority_label(older);
  const auto b = majority_label(newer);
  if (!a || !b || *a == *b) return {};
  return {true, *a, *b};
}

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kGated: return "gated";
    case PipelineMode::kPerFrame: return "per_frame";
    case PipelineMode::kBatchOffline: return "batch_offline";
  }
  return "unknown";
}

PipelineMode parse_pipeline_mode(const std::string& name) {
  if (name == "gated") return PipelineMode::kGated;
  if (name == "per_frame") return PipelineMode::kPerFrame;
  if (name == "batch_offline") return PipelineMode::kBatchOffline;
  throw ValidationError("mode", "unknown mode '" + name + "' (gated, per_frame, batch_offline)");
}

void PipelineConfig::validate() const {
  stft.validate();
  iva.validate();
  vad.validate();
  if (stft.frame_len / 2 + 1 < static_cast<std::size_t>(kFeatureDim))
    throw ValidationError("stft.frame_len", "too short for the correlation lags");
  if (!(mic_spacing > 0.0)) throw ValidationError("mic_spacing", "must be positive");
  if (per_frame_max_iters < 1) throw ValidationError("per_frame_max_iters", "must be >= 1");
  if (warmup_voice_frames < 1) throw ValidationError("warmup_voice_frames", "must be >= 1");
  if (install_delay_frames > DoaHistory::kCapacity)
    throw ValidationError("install_delay_frames", "must not exceed the 10-frame history");
  if (force_gate_open && install_delay_frames != 0)
    throw ValidationError("install_delay_frames", "must be 0 when the gate is forced open");
  if (iva.buffer_frames < 2) throw ValidationError("iva.buffer_frames", "streaming updates need >= 2 frames");
}

// ---------------------------------------------------------------------------
// Update job and worker

struct SeparationPipeline::Job {
  std::vector<SpectralFrame> frames;
  std::unique_ptr<bool[]> voice;
  std::vector<SourceEstimate> demixed;
  std::size_t count = 0;
  DemixingStack w_init;
  IvaConfig iva;
  std::size_t trigger_frame = 0;

  bool ok = false;
  DemixingStack result;
  std::size_t channel = 0;
  std::string error;
  double wall_us = 0.0;
};

class SeparationPipeline::Worker {
 public:
  Worker() : thread_([this] { run(); }) {
    // Updates only use CPU time the audio path leaves idle.
    sched_param param{};
    pthread_setschedparam(thread_.native_handle(), SCHED_IDLE, &param);
  }
  ~Worker() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }

  void submit(Job* job) {
    {
      std::lock_guard lock(mutex_);
      job_ = job;
      busy_ = true;
    }
    cv_.notify_all();
  }

  void wait() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !busy_; });
  }

 private:
  void run() {
    std::unique_lock lock(mutex_);
    for (;;) {
      cv_.wait(lock, [this] { return stop_ || busy_; });
      if (stop_) return;
      Job* job = job_;
      lock.unlock();
      SeparationPipeline::compute_update(*job);
      lock.lock();
      busy_ = false;
      cv_.notify_all();
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  Job* job_ = nullptr;
  bool busy_ = false;
  bool stop_ = false;
  std::thread thread_;
};

void SeparationPipeline::compute_update(Job& job) {
  const auto t0 = Clock::now();
  job.ok = false;
  job.error.clear();
  try {
    const std::span<const SpectralFrame> frames(job.frames.data(), job.count);
    IvaResult res = batch_iva(frames, job.iva, job.w_init);
    for (std::size_t i = 0; i < job.count; ++i) apply_demixing(res.stack, job.frames[i], job.demixed[i]);
    job.channel = select_speech_channel(std::span<const SourceEstimate>(job.demixed.data(), job.count),
                                        std::span<const bool>(job.voice.get(), job.count));
    job.result = std::move(res.stack);
    job.result.frame_of_last_update = job.trigger_frame;
    job.ok = true;
  } catch (const Error& e) {
    job.error = e.what();
  }
  job.wall_us = micros_since(t0);
}

// ---------------------------------------------------------------------------
// Pipeline

SeparationPipeline::SeparationPipeline(PipelineConfig cfg, std::shared_ptr<const FnnModel> model)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      analyzer_(cfg_.stft, kNumSources),
      synth_(cfg_.stft),
      vad_(cfg_.vad) {
  cfg_.validate();
  if (cfg_.mode == PipelineMode::kBatchOffline)
    throw ValidationError("mode", "batch_offline is not a streaming mode; use run_stream");
  if (cfg_.doa_source == DoaSource::kFnn && !model_)
    throw ValidationError("model", "the FNN DOA source needs a model");
  if (model_ && !model_->is_finite()) throw ValidationError("model", "non-finite weights");

  const std::size_t bins = cfg_.stft.num_bins();
  stack_ = DemixingStack::identity(bins);
  frame_ = analyzer_.make_frame();
  demixed_ = SourceEstimate::zeros(bins);
  ring_.assign(cfg_.iva.buffer_frames, frame_);
  ring_voice_.assign(cfg_.iva.buffer_frames, false);

  job_ = std::make_unique<Job>();
  job_->frames.assign(cfg_.iva.buffer_frames, frame_);
  job_->voice = std::make_unique<bool[]>(cfg_.iva.buffer_frames);
  job_->demixed.assign(cfg_.iva.buffer_frames, demixed_);
  job_->w_init = stack_;
  job_->result = stack_;
  job_->iva = cfg_.iva;
  if (cfg_.mode == PipelineMode::kPerFrame) job_->iva.max_iters = cfg_.per_frame_max_iters;

  if (cfg_.execution == UpdateExecution::kBackground && cfg_.install_delay_frames > 0 &&
      cfg_.mode == PipelineMode::kGated)
    worker_ = std::make_unique<Worker>();

  stats_.mode = cfg_.mode;
}

SeparationPipeline::~SeparationPipeline() {
  if (worker_ && pending_) worker_->wait();
}

void SeparationPipeline::reserve_frames(std::size_t n) {
  stats_.per_frame_wall_us.reserve(n);
  stats_.voice_flags.reserve(n);
  stats_.triggered_flags.reserve(n);
  stats_.doa_labels.reserve(n);
  stats_.update_wall_us.reserve(n);
  stats_.trigger_frames.reserve(n);
}

void SeparationPipeline::trigger_update(bool warmup, std::size_t frame) {
  if (pending_) {
    stats_.events.push_back("frame " + std::to_string(frame) + ": trigger ignored, update already in flight");
    return;
  }
  Job& job = *job_;
  job.count = ring_size_;
  const std::size_t cap = ring_.size();
  const std::size_t oldest = (ring_head_ + cap - ring_size_) % cap;
  for (std::size_t i = 0; i < ring_size_; ++i) {
    const std::size_t idx = (oldest + i) % cap;
    job.frames[i].coeffs = ring_[idx].coeffs;  // same shape: no reallocation
    job.frames[i].frame_index = ring_[idx].frame_index;
    job.voice[i] = ring_voice_[idx];
  }
  job.w_init.w = stack_.w;
  job.w_init.update_count = stack_.update_count;
  job.w_init.frame_of_last_update = stack_.frame_of_last_update;
  job.trigger_frame = frame;

  ++stats_.updates_triggered;
  if (warmup) ++stats_.warmup_updates;
  stats_.trigger_frames.push_back(frame);

  pending_ = true;
  const bool immediate = cfg_.mode == PipelineMode::kPerFrame || cfg_.install_delay_frames == 0;
  install_frame_ = immediate ? frame : frame + cfg_.install_delay_frames;
  if (worker_ && !immediate)
    worker_->submit(&job);
  else
    compute_update(job);
}

void SeparationPipeline::install_pending() {
  if (!pending_) return;
  if (worker_) worker_->wait();
  Job& job = *job_;
  if (job.ok) {
    stack_.w = job.result.w;
    stack_.update_count = job.result.update_count;
    stack_.frame_of_last_update = job.result.frame_of_last_update;
    speech_channel_ = job.channel;
  } else {
    ++stats_.failed_updates;
    stats_.events.push_back("frame " + std::to_string(job.trigger_frame) + ": update failed, keeping previous stack: " +
                            job.error);
  }
  stats_.update_wall_us.push_back(job.wall_us);
  pending_ = false;
}

FrameOutcome SeparationPipeline::process_frame(std::span<const double> ch1, std::span<const double> ch2,
                                               std::span<double> out_hop, std::optional<int> truth_label) {
  const auto t0 = Clock::now();
  double waited_us = 0.0;
  const std::size_t index = stats_.frames_processed;
  FrameOutcome outcome;

  const std::array<std::span<const double>, 2> views{ch1, ch2};
  analyzer_.analyze(views, frame_);
  frame_.frame_index = index;

  outcome.voice = vad_decide(vad_, ch1).voice;
  if (outcome.voice) {
    ++stats_.voice_frames;
    if (cfg_.doa_source == DoaSource::kGroundTruth) {
      if (!truth_label || *truth_label < 0 || *truth_label >= kNumClasses)
        throw PreconditionError("process_frame: ground-truth DOA source needs a label in [0, 6]");
      outcome.label = *truth_label;
    } else {
      thread_local CrossCorrelation cc;
      if (cfg_.weighting == CorrelationWeighting::kPlain)
        cross_correlate_into(ch1, ch2, kMaxLag, cc);
      else
        cc = cross_correlate(ch1, ch2, kMaxLag, cfg_.weighting);
      const DoaFeature feature = extract_feature(cc);
      if (!feature.is_degenerate()) outcome.label = fnn_forward(*model_, feature).label;
    }
    if (outcome.label >= 0) history_.push(outcome.label);
  }

  // Rolling buffer of the most recent frames.
  const std::size_t cap = ring_.size();
  ring_[ring_head_].coeffs = frame_.coeffs;
  ring_[ring_head_].frame_index = index;
  ring_voice_[ring_head_] = outcome.voice;
  ring_head_ = (ring_head_ + 1) % cap;
  ring_size_ = std::min(ring_size_ + 1, cap);

  if (pending_ && index >= install_frame_) {
    const auto w0 = Clock::now();
    install_pending();
    waited_us += micros_since(w0);
    outcome.installed = true;
  }

  if (outcome.voice) {
    if (cfg_.mode == PipelineMode::kPerFrame) {
      if (ring_size_ >= 2) {
        trigger_update(false, index);
        outcome.triggered = true;
      }
    } else if (!warmed_up_) {
      if (stats_.voice_frames >= cfg_.warmup_voice_frames) {
        trigger_update(true, index);
        warmed_up_ = true;
        history_.clear();
        outcome.triggered = true;
      }
    } else if (cfg_.force_gate_open || (outcome.label >= 0 && should_update(history_).update)) {
      if (!pending_) {
        trigger_update(false, index);
        history_.clear();
        outcome.triggered = true;
      }
    }
  }

  if (pending_ && index >= install_frame_) {
    install_pending();
    outcome.installed = true;
  }

  apply_demixing(stack_, frame_, demixed_);
  synth_.push(demixed_.y[speech_channel_], out_hop);

  ++stats_.frames_processed;
  stats_.per_frame_wall_us.push_back(micros_since(t0) - waited_us);
  stats_.voice_flags.push_back(outcome.voice);
  stats_.triggered_flags.push_back(outcome.triggered);
  stats_.doa_labels.push_back(outcome.label);
  return outcome;
}

void SeparationPipeline::flush(std::span<double> out_tail) {
  if (pending_) install_pending();
  synth_.flush(out_tail);
}

// ---------------------------------------------------------------------------
// Whole-clip runs

namespace {

StreamResult run_batch_offline(const AudioClip& clip, const PipelineConfig& cfg) {
  const auto t_start = Clock::now();
  const auto frames = stft_analyze(clip, cfg.stft);
  StreamResult out;
  UpdateStats& stats = out.stats;
  stats.mode = PipelineMode::kBatchOffline;
  stats.num_samples = clip.num_samples();
  stats.sample_rate_hz = clip.sample_rate_hz();

  VadState vad(cfg.vad);
  std::vector<bool> flags(frames.size());
  for (std::size_t m = 0; m < frames.size(); ++m) {
    flags[m] = vad_decide(vad, clip.channel(0).subspan(m * cfg.stft.hop, cfg.stft.frame_len)).voice;
    stats.voice_flags.push_back(flags[m]);
    stats.triggered_flags.push_back(m == 0);
    stats.doa_labels.push_back(-1);
    stats.voice_frames += flags[m];
  }
  stats.frames_processed = frames.size();

  const auto t0 = Clock::now();
  IvaResult res = batch_iva(frames, cfg.iva, DemixingStack::identity(cfg.stft.num_bins()));
  stats.update_wall_us.push_back(micros_since(t0));
  stats.updates_triggered = 1;
  stats.trigger_frames.push_back(0);

  std::vector<SourceEstimate> ys;
  ys.reserve(frames.size());
  for (const auto& f : frames) ys.push_back(apply_demixing(res.stack, f));
  std::size_t channel = 0;
  if (stats.voice_frames > 0) {
    std::unique_ptr<bool[]> raw = std::make_unique<bool[]>(flags.size());
    for (std::size_t i = 0; i < flags.size(); ++i) raw[i] = flags[i];
    channel = select_speech_channel(ys, std::span<const bool>(raw.get(), flags.size()));
  }

  std::vector<SpectralFrame> mono(frames.size());
  for (std::size_t m = 0; m < frames.size(); ++m) {
    mono[m].coeffs = {ys[m].y[channel]};
    mono[m].frame_index = m;
  }
  AudioClip synth = istft_synthesize(mono, cfg.stft, clip.sample_rate_hz());
  std::vector<double> samples(clip.num_samples(), 0.0);
  std::copy_n(synth.channel(0).begin(), std::min(samples.size(), synth.num_samples()), samples.begin());
  out.separated = AudioClip::mono(std::move(samples), clip.sample_rate_hz());
  out.final_stack = std::move(res.stack);

  const double per_frame = micros_since(t_start) / static_cast<double>(std::max<std::size_t>(frames.size(), 1));
  stats.per_frame_wall_us.assign(frames.size(), per_frame);
  return out;
}

}  // namespace

StreamResult run_stream(const AudioClip& clip, const PipelineConfig& cfg, std::shared_ptr<const FnnModel> model,
                        std::span<const int> truth_labels) {
  cfg.validate();
  if (clip.num_channels() != 2) throw PreconditionError("run_stream: expected a 2-channel clip");
  if (clip.sample_rate_hz() != kCanonicalRateHz) throw PreconditionError("run_stream: expected a 16 kHz clip");
  if (clip.num_samples() < cfg.stft.frame_len) throw PreconditionError("run_stream: clip shorter than one frame");
  if (cfg.mode == PipelineMode::kBatchOffline) return run_batch_offline(clip, cfg);

  const std::size_t frames = cfg.stft.num_frames(clip.num_samples());
  if (cfg.doa_source == DoaSource::kGroundTruth && truth_labels.size() < frames)
    throw PreconditionError("run_stream: ground-truth labels must cover every frame");

  SeparationPipeline pipeline(cfg, std::move(model));
  pipeline.reserve_frames(frames);
  std::vector<double> out(clip.num_samples() + cfg.stft.frame_len, 0.0);
  const std::size_t hop = cfg.stft.hop;
  for (std::size_t m = 0; m < frames; ++m) {
    std::optional<int> label;
    if (cfg.doa_source == DoaSource::kGroundTruth) label = truth_labels[m];
    pipeline.process_frame(clip.channel(0).subspan(m * hop, cfg.stft.frame_len),
                           clip.channel(1).subspan(m * hop, cfg.stft.frame_len),
                           std::span<double>(out).subspan(m * hop, hop), label);
  }
  pipeline.flush(std::span<double>(out).subspan(frames * hop, cfg.stft.frame_len - hop));
  out.resize(clip.num_samples());

  StreamResult result;
  result.separated = AudioClip::mono(std::move(out), clip.sample_rate_hz());
  result.stats = pipeline.stats();
  result.stats.num_samples = clip.num_samples();
  result.stats.sample_rate_hz = clip.sample_rate_hz();
  result.final_stack = pipeline.stack();
  return result;
}

std::vector<int> truth_frame_labels(const MovingSourceScene& scene, const StftConfig& stft) {
  const std::size_t frames = stft.num_frames(scene.mixture.mixture.num_samples());
  std::vector<int> labels(frames);
  for (std::size_t m = 0; m < frames; ++m)
    labels[m] = angle_to_class(scene.angle_at(m * stft.hop + stft.frame_len / 2));
  return labels;
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

double percentile_ms(std::vector<double> us, double q) {
  if (us.empty()) return 0.0;
  std::sort(us.begin(), us.end());
  const double pos = q * static_cast<double>(us.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, us.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return (us[lo] * (1.0 - frac) + us[hi] * frac) / 1000.0;
}

}  // namespace

ComplexityReport complexity_report(const UpdateStats& stats, const ReportOptions& options) {
  ComplexityReport r;
  r.mode = stats.mode;
  r.frames = stats.frames_processed;
  r.voice_frames = stats.voice_frames;
  r.updates_triggered = stats.updates_triggered;
  r.warmup_updates = stats.warmup_updates;

  if (options.accounting_frame_ms > 0.0 && stats.sample_rate_hz > 0) {
    const double duration_ms = 1000.0 * static_cast<double>(stats.num_samples) / stats.sample_rate_hz;
    r.accounting_frames = static_cast<std::size_t>(std::floor(duration_ms / options.accounting_frame_ms + 1e-9));
  } else {
    r.accounting_frames = stats.frames_processed;
  }

  if (stats.mode == PipelineMode::kPerFrame) {
    r.accounted_updates = options.accounting_frame_ms > 0.0 ? r.accounting_frames : stats.updates_triggered;
  } else {
    // The warm-up update is the floor when nothing else fired.
    r.accounted_updates = std::max<std::size_t>(stats.updates_triggered - stats.warmup_updates, 1);
  }
  r.update_ratio = r.accounted_updates > 0
                       ? static_cast<double>(r.accounting_frames) / static_cast<double>(r.accounted_updates)
                       : 0.0;

  r.p50_frame_ms = percentile_ms(stats.per_frame_wall_us, 0.5);
  r.p95_frame_ms = percentile_ms(stats.per_frame_wall_us, 0.95);
  r.max_frame_ms = percentile_ms(stats.per_frame_wall_us, 1.0);
  std::vector<double> steady;
  for (std::size_t i = 0; i < stats.per_frame_wall_us.size(); ++i)
    if (i >= stats.triggered_flags.size() || !stats.triggered_flags[i]) steady.push_back(stats.per_frame_wall_us[i]);
  r.steady_p50_frame_ms = percentile_ms(steady, 0.5);
  r.steady_p95_frame_ms = percentile_ms(steady, 0.95);
  r.steady_max_frame_ms = percentile_ms(steady, 1.0);
  r.max_update_ms = percentile_ms(stats.update_wall_us, 1.0);
  r.real_time_ok = r.max_frame_ms < options.budget_ms;
  return r;
}

std::string stats_to_json(const UpdateStats& stats) {
  nlohmann::json j;
  j["mode"] = to_string(stats.mode);
  j["frames_processed"] = stats.frames_processed;
  j["voice_frames"] = stats.voice_frames;
  j["updates_triggered"] = stats.updates_triggered;
  j["warmup_updates"] = stats.warmup_updates;
  j["failed_updates"] = stats.failed_updates;
  j["num_samples"] = stats.num_samples;
  j["sample_rate_hz"] = stats.sample_rate_hz;
  j["trigger_frames"] = stats.trigger_frames;
  j["update_wall_us"] = stats.update_wall_us;
  j["events"] = stats.events;
  return j.dump(2);
}

std::string report_to_json(const ComplexityReport& r) {
  nlohmann::json j;
  j["mode"] = to_string(r.mode);
  j["frames"] = r.frames;
  j["voice_frames"] = r.voice_frames;
  j["updates_triggered"] = r.updates_triggered;
  j["warmup_updates"] = r.warmup_updates;
  j["accounting_frames"] = r.accounting_frames;
  j["accounted_updates"] = r.accounted_updates;
  j["update_ratio"] = r.update_ratio;
  j["p50_frame_ms"] = r.p50_frame_ms;
  j["p95_frame_ms"] = r.p95_frame_ms;
  j["max_frame_ms"] = r.max_frame_ms;
  j["steady_p50_frame_ms"] = r.steady_p50_frame_ms;
  j["steady_p95_frame_ms"] = r.steady_p95_frame_ms;
  j["steady_max_frame_ms"] = r.steady_max_frame_ms;
  j["max_update_ms"] = r.max_update_ms;
  j["real_time_ok"] = r.real_time_ok;
  return j.dump(2);
}

void write_timing_csv(const UpdateStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frame_index,micros,voice_flag,triggered_flag\n";
  for (std::size_t i = 0; i < stats.per_frame_wall_us.size(); ++i)
    out << i << ',' << stats.per_frame_wall_us[i] << ',' << (i < stats.voice_flags.size() && stats.voice_flags[i])
        << ',' << (i < stats.triggered_flags.size() && stats.triggered_flags[i]) << '\n';
}

}  // namespace bssgate
