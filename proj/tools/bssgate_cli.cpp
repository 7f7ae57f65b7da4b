// bssgate: simulate scenes and DOA datasets, train the DOA classifier,
// separate, evaluate and benchmark. Every run writes run_manifest.json into
// the output directory.
//
// Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bssgate/audio_io.hpp"
#include "bssgate/bench.hpp"
#include "bssgate/config_io.hpp"
#include "bssgate/dataset.hpp"
#include "bssgate/doa.hpp"
#include "bssgate/errors.hpp"
#include "bssgate/eval.hpp"
#include "bssgate/gate_pipeline.hpp"
#include "bssgate/random.hpp"
#include "bssgate/room_sim.hpp"
#include "json.hpp"

using namespace bssgate;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = "out";
  bool verbose = false;
};

struct Run {
  std::string command;
  json config = json::object();
  json inputs = json::array();
  json outputs = json::array();
  json summary = json::object();
};

Globals g;

void log(const std::string& msg) {
  if (g.verbose) std::cerr << "[bssgate] " << msg << '\n';
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
}

// Sections of the --config file. Missing sections keep the defaults.
json config_section(const char* name) {
  if (g.config_path.empty()) return json::object();
  json j;
  try {
    j = json::parse(read_text(g.config_path));
  } catch (const json::exception& e) {
    throw ValidationError("config", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config", "expected a JSON object");
  for (const auto& item : j.items())
    if (item.key() != "scene" && item.key() != "pipeline" && item.key() != "train")
      throw ValidationError(item.key(), "unknown config section (expected scene, pipeline, train)");
  return j.contains(name) ? j.at(name) : json::object();
}

SceneConfig resolve_scene() {
  SceneConfig cfg = scene_config_from_json(config_section("scene").dump());
  if (g.seed) cfg.seed = derive_seed(*g.seed, "scene");
  return cfg;
}

PipelineConfig resolve_pipeline() { return pipeline_config_from_json(config_section("pipeline").dump()); }

TrainConfig resolve_train() {
  TrainConfig cfg = train_config_from_json(config_section("train").dump());
  if (g.seed) cfg.seed = derive_seed(*g.seed, "trainer");
  return cfg;
}

AudioClip load_mono_16k(const fs::path& p) {
  AudioClip clip = read_wav(p);
  if (clip.sample_rate_hz() == 3 * kCanonicalRateHz) clip = resample_3to1(clip);
  if (clip.sample_rate_hz() != kCanonicalRateHz)
    throw ValidationError("speech", p.string() + ": expected 16 kHz or 48 kHz audio");
  if (clip.num_channels() != 1) clip = AudioClip::mono({clip.channel(0).begin(), clip.channel(0).end()}, kCanonicalRateHz);
  return clip;
}

void write_manifest(const Run& run, double wall_s, int argc, char** argv) {
  json m;
  m["command"] = run.command;
  m["version"] = BSSGATE_VERSION;
  m["seed"] = g.seed ? json(*g.seed) : json(nullptr);
  m["config"] = run.config;
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  m["wall_clock_s"] = wall_s;
  m["summary"] = run.summary;
  m["argv"] = std::vector<std::string>(argv, argv + argc);
  write_text(fs::path(g.out_dir) / "run_manifest.json", m.dump(2) + "\n");
}

std::vector<double> parse_list(const std::string& text, const char* field) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError(field, "not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError(field, "empty list");
  return out;
}

// --- simulate ---------------------------------------------------------------

struct SimulateOpts {
  std::string speech;
  std::string noise;
  std::string noise_wav;
  double duration_s = 6.0;
  std::optional<double> angle, snr, t60;
  std::string moving;
  double segment_s = 3.0;
  bool pcm16 = false;
  bool dataset = false;
  std::string angles = "0,30,60,90,120,150,180";
  std::string snrs = "-5,0,5";
  std::size_t clips = 4;
  double clip_s = 2.0;
  std::vector<std::string> corpus;
  bool features_only = false;
};

void write_truth_labels(const fs::path& p, const std::vector<int>& labels) {
  std::ostringstream os;
  os << "frame,label\n";
  for (std::size_t m = 0; m < labels.size(); ++m) os << m << ',' << labels[m] << '\n';
  write_text(p, os.str());
}

void cmd_simulate(const SimulateOpts& o, Run& run) {
  SceneConfig scene = resolve_scene();
  if (o.angle) scene.source_angle_deg = *o.angle;
  if (o.snr) scene.snr_db = *o.snr;
  if (o.t60) scene.t60 = *o.t60;
  if (!o.noise.empty()) scene.noise_kind = parse_noise_kind(o.noise);
  scene.validate();
  run.config["scene"] = json::parse(scene_config_to_json(scene));
  const fs::path out(g.out_dir);

  if (o.dataset) {
    const auto angles = parse_list(o.angles, "angles");
    const auto snrs = parse_list(o.snrs, "snrs");
    std::vector<AudioClip> corpus;
    for (const auto& p : o.corpus) {
      corpus.push_back(load_mono_16k(p));
      run.inputs.push_back(p);
    }
    const std::uint64_t corpus_seed = derive_seed(g.seed.value_or(scene.seed), "corpus");
    if (corpus.empty()) corpus = synthetic_corpus(o.clips, o.clip_s, corpus_seed);
    run.config["dataset"] = {{"angles", angles}, {"snrs", snrs}, {"clips", corpus.size()},
                             {"clip_s", o.clip_s}, {"corpus_seed", corpus_seed},
                             {"synthetic_corpus", o.corpus.empty()}};
    log("building dataset: " + std::to_string(angles.size() * snrs.size() * corpus.size()) + " cells");
    DatasetOptions dopt;
    dopt.keep_mixtures = !o.features_only;
    const auto ds = build_doa_dataset(angles, snrs, corpus, scene, dopt);
    write_dataset_archive(ds, out, run.config.dump());
    run.outputs.push_back((out / "manifest.json").string());
    run.summary["rows"] = ds.num_rows();
    run.summary["groups"] = ds.groups.size();
    std::cout << "dataset: " << ds.num_rows() << " rows in " << ds.groups.size() << " groups -> " << out.string()
              << '\n';
    return;
  }

  const WavFormat fmt = o.pcm16 ? WavFormat::kPcm16 : WavFormat::kFloat32;
  LabeledMixture mix;
  std::vector<int> labels;
  if (!o.moving.empty()) {
    if (!o.speech.empty() || !o.noise_wav.empty())
      throw ValidationError("moving", "moving-source scenes use synthetic speech and noise");
    const auto angles = parse_list(o.moving, "moving");
    const auto moving = simulate_moving_source(scene, angles, o.segment_s);
    labels = truth_frame_labels(moving, StftConfig::standard());
    mix = moving.mixture;
    run.config["moving"] = {{"angles", angles}, {"segment_s", o.segment_s}};
  } else if (o.speech.empty() && o.noise_wav.empty()) {
    mix = simulate_scene(scene, o.duration_s);
    run.config["duration_s"] = o.duration_s;
  } else {
    AudioClip speech = o.speech.empty()
                           ? AudioClip::mono(synth_speech(o.duration_s, derive_seed(scene.seed, "speech")),
                                             kCanonicalRateHz)
                           : load_mono_16k(o.speech);
    const double dur = speech.duration_s();
    AudioClip noise = o.noise_wav.empty()
                          ? AudioClip::mono(generate_noise(scene.noise_kind, dur, derive_seed(scene.seed, "noise")),
                                            kCanonicalRateHz)
                          : load_mono_16k(o.noise_wav);
    if (!o.speech.empty()) run.inputs.push_back(o.speech);
    if (!o.noise_wav.empty()) run.inputs.push_back(o.noise_wav);
    mix = make_mixture(scene, speech, noise);
  }
  if (labels.empty()) labels.assign(StftConfig::standard().num_frames(mix.mixture.num_samples()),
                                    angle_to_class(scene.source_angle_deg));

  std::size_t clipped = 0;
  for (auto [name, clip] : {std::pair{"mixture.wav", &mix.mixture}, std::pair{"speech_image.wav", &mix.clean_speech_at_mics},
                            std::pair{"noise_image.wav", &mix.noise_at_mics}}) {
    clipped += write_wav(*clip, out / name, fmt).clipped_samples;
    run.outputs.push_back((out / name).string());
  }
  write_truth_labels(out / "truth_labels.csv", labels);
  run.outputs.push_back((out / "truth_labels.csv").string());
  run.summary["clipped_samples"] = clipped;
  run.summary["num_samples"] = mix.mixture.num_samples();
  run.summary["true_angle_deg"] = mix.true_angle_deg;
  std::cout << "mixture: " << mix.mixture.duration_s() << " s, snr " << mix.snr_db << " dB -> " << out.string() << '\n';
  if (clipped > 0) std::cerr << "warning: " << clipped << " samples clipped\n";
}

// --- train-doa --------------------------------------------------------------

struct TrainOpts {
  std::string dataset;
  std::string model;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> step;
  bool use_bias = false;
};

void cmd_train(const TrainOpts& o, Run& run) {
  TrainConfig tc = resolve_train();
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.step) tc.step = *o.step;
  if (o.use_bias) tc.use_bias = true;
  tc = train_config_from_json(train_config_to_json(tc));  // validates
  run.config["train"] = json::parse(train_config_to_json(tc));
  run.inputs.push_back(o.dataset);

  const auto rows = read_dataset_archive(o.dataset);
  log("training on " + std::to_string(rows.size()) + " rows");
  const auto res = fnn_train(rows, tc);
  const fs::path model_path = o.model.empty() ? fs::path(g.out_dir) / "model.json" : fs::path(o.model);
  save_model(res.model, model_path);
  std::ostringstream curve;
  curve.precision(10);
  curve << "epoch,loss,train_accuracy,validation_accuracy\n";
  for (const auto& e : res.curve)
    curve << e.epoch << ',' << e.loss << ',' << e.train_accuracy << ',' << e.validation_accuracy << '\n';
  const fs::path curve_path = fs::path(g.out_dir) / "training_curve.csv";
  write_text(curve_path, curve.str());
  run.outputs.push_back(model_path.string());
  run.outputs.push_back(curve_path.string());
  run.summary["rows"] = rows.size();
  run.summary["train_accuracy"] = res.train_accuracy;
  run.summary["validation_accuracy"] = res.validation_accuracy;
  run.summary["weight_hash"] = res.model.weight_hash();
  std::cout << "train acc " << res.train_accuracy << ", validation acc " << res.validation_accuracy << ", hash "
            << res.model.weight_hash() << '\n';
}

// --- separate ---------------------------------------------------------------

struct SeparateOpts {
  std::string input;
  std::string model;
  std::string mode;
  std::string output;
  std::string stats;
  std::string timing_csv;
  std::string truth_labels;
  std::optional<double> truth_angle;
};

std::vector<int> read_truth_labels(const fs::path& p) {
  std::istringstream is(read_text(p));
  std::string line;
  std::getline(is, line);
  if (line != "frame,label") throw DecodeError(p.string(), "expected header 'frame,label'");
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument(line);
      if (std::stoul(line.substr(0, comma)) != labels.size()) throw std::invalid_argument(line);
      labels.push_back(std::stoi(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DecodeError(p.string(), "malformed row " + std::to_string(row) + ": " + line);
    }
  }
  return labels;
}

void cmd_separate(const SeparateOpts& o, Run& run) {
  PipelineConfig pc = resolve_pipeline();
  if (!o.mode.empty()) pc.mode = parse_pipeline_mode(o.mode);
  std::vector<int> labels;
  const AudioClip clip = read_wav(o.input);
  run.inputs.push_back(o.input);
  if (clip.num_channels() != 2)
    throw PreconditionError(o.input + ": separation needs a 2-channel recording, got " +
                            std::to_string(clip.num_channels()));
  if (!o.truth_labels.empty()) {
    labels = read_truth_labels(o.truth_labels);
    run.inputs.push_back(o.truth_labels);
  } else if (o.truth_angle) {
    labels.assign(pc.stft.num_frames(clip.num_samples()), angle_to_class(*o.truth_angle));
  }
  if (!labels.empty()) pc.doa_source = DoaSource::kGroundTruth;
  pc.validate();
  run.config["pipeline"] = json::parse(pipeline_config_to_json(pc));

  std::shared_ptr<const FnnModel> model;
  if (!o.model.empty()) {
    model = std::make_shared<FnnModel>(load_model(o.model));
    run.inputs.push_back(o.model);
  } else if (pc.doa_source == DoaSource::kFnn && pc.mode != PipelineMode::kBatchOffline) {
    throw ValidationError("model", "--model is required unless ground-truth labels are given");
  }

  log("separating " + o.input + " in " + to_string(pc.mode) + " mode");
  const auto r = run_stream(clip, pc, model, labels);
  const fs::path out = o.output.empty() ? fs::path(g.out_dir) / "separated.wav" : fs::path(o.output);
  const fs::path stats = o.stats.empty() ? fs::path(g.out_dir) / "stats.json" : fs::path(o.stats);
  write_wav(r.separated, out, WavFormat::kFloat32);
  write_text(stats, stats_to_json(r.stats) + "\n");
  run.outputs.push_back(out.string());
  run.outputs.push_back(stats.string());
  if (!o.timing_csv.empty()) {
    write_timing_csv(r.stats, o.timing_csv);
    run.outputs.push_back(o.timing_csv);
  }
  run.summary["updates_triggered"] = r.stats.updates_triggered;
  run.summary["warmup_updates"] = r.stats.warmup_updates;
  run.summary["voice_frames"] = r.stats.voice_frames;
  std::cout << to_string(pc.mode) << ": " << r.stats.updates_triggered << " updates (" << r.stats.warmup_updates
            << " warm-up), " << r.stats.voice_frames << " voice frames of " << r.stats.frames_processed << '\n';
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateOpts {
  std::string est;
  std::string ref;
  std::string mixture;
  std::string csv;
  std::string noise_kind;
  double input_snr_db = 0.0;
};

void cmd_evaluate(const EvaluateOpts& o, Run& run) {
  std::vector<fs::path> files;
  if (fs::is_directory(o.est)) {
    for (const auto& e : fs::directory_iterator(o.est))
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("est", o.est + " holds no .wav files");
  } else {
    files.emplace_back(o.est);
  }

  // read everything first so a bad file withholds all results
  auto load = [](const fs::path& p) {
    try {
      return read_wav(p);
    } catch (const Error& e) {
      throw DecodeError(p.string(), std::string("cannot evaluate: ") + e.what());
    }
  };
  const AudioClip ref = load(o.ref);
  run.inputs.push_back(o.ref);
  std::vector<std::pair<std::string, AudioClip>> ests;
  for (const auto& f : files) {
    ests.emplace_back(f.filename().string(), load(f));
    run.inputs.push_back(f.string());
  }
  std::optional<AudioClip> mixture;
  if (!o.mixture.empty()) {
    mixture = load(o.mixture);
    run.inputs.push_back(o.mixture);
  }

  const auto r = ref.channel(0);
  std::vector<SeparationMetrics> rows;
  auto add = [&](const std::string& label, std::span<const double> est) {
    auto m = score_estimate(label, est, r);
    m.noise_kind = o.noise_kind;
    m.input_snr_db = o.input_snr_db;
    rows.push_back(std::move(m));
  };
  if (mixture) add("noisy", mixture->channel(0));
  for (const auto& [name, clip] : ests) add(name, clip.channel(0));

  const fs::path csv = o.csv.empty() ? fs::path(g.out_dir) / "metrics.csv" : fs::path(o.csv);
  fs::path js = csv;
  js.replace_extension(".json");
  write_text(csv, metrics_to_csv(rows));
  write_text(js, metrics_to_json(rows) + "\n");
  run.outputs.push_back(csv.string());
  run.outputs.push_back(js.string());
  run.summary["rows"] = rows.size();
  for (const auto& m : rows)
    std::cout << m.label << ": sdr " << m.sdr_db << " dB, seg_snr " << m.seg_snr_db << " dB, shift "
              << m.alignment_shift << '\n';
}

// --- bench ------------------------------------------------------------------

struct BenchOpts {
  std::string angles = "90,120,60,150,30";
  double segment_s = 3.0;
  std::string subject = "gated";
  std::string baseline = "per_frame";
  double accounting_ms = 100.0;
  std::optional<double> snr, t60;
  std::string model;
  std::string timing_csv;
};

void cmd_bench(const BenchOpts& o, Run& run) {
  BenchOptions b;
  b.angles_deg = parse_list(o.angles, "angles");
  b.segment_s = o.segment_s;
  b.subject = parse_pipeline_mode(o.subject);
  b.baseline = parse_pipeline_mode(o.baseline);
  b.accounting_frame_ms = o.accounting_ms;
  if (!g.config_path.empty()) {
    const auto s = config_section("scene");
    if (!s.empty()) b.scene = scene_config_from_json(s.dump());
    const auto p = config_section("pipeline");
    if (!p.empty()) b.pipeline = pipeline_config_from_json(p.dump(), b.pipeline);
  }
  if (g.seed) b.scene.seed = derive_seed(*g.seed, "scene");
  if (o.snr) b.scene.snr_db = *o.snr;
  if (o.t60) b.scene.t60 = *o.t60;
  b.scene.validate();

  std::shared_ptr<const FnnModel> model;
  if (!o.model.empty()) {
    model = std::make_shared<FnnModel>(load_model(o.model));
    b.pipeline.doa_source = DoaSource::kFnn;
    run.inputs.push_back(o.model);
  }
  run.config["scene"] = json::parse(scene_config_to_json(b.scene));
  run.config["pipeline"] = json::parse(pipeline_config_to_json(b.pipeline));
  run.config["bench"] = {{"angles", b.angles_deg},          {"segment_s", b.segment_s},
                         {"subject", to_string(b.subject)}, {"baseline", to_string(b.baseline)},
                         {"accounting_frame_ms", b.accounting_frame_ms}};

  log("running " + to_string(b.subject) + " and " + to_string(b.baseline));
  const auto r = run_bench(b, model);
  const fs::path out = fs::path(g.out_dir) / "bench.json";
  write_text(out, bench_to_json(r) + "\n");
  run.outputs.push_back(out.string());
  if (!o.timing_csv.empty()) {
    write_timing_csv(r.subject_stats, o.timing_csv);
    run.outputs.push_back(o.timing_csv);
  }
  run.summary = json::parse(bench_to_json(r));
  run.summary.erase("subject_trigger_frames");

  std::printf("%s: %zu updates (%zu warm-up), %zu accounted over %zu accounting frames\n",
              to_string(b.subject).c_str(), r.subject.updates_triggered, r.subject.warmup_updates,
              r.subject.accounted_updates, r.subject.accounting_frames);
  std::printf("%s: %zu updates, %zu accounted\n", to_string(b.baseline).c_str(), r.baseline.updates_triggered,
              r.baseline.accounted_updates);
  std::printf("ratio %.2f\n", r.ratio);
  std::printf("frame time p95 %.4f ms, max %.4f ms, budget 20 ms: real_time_ok=%s\n", r.subject.p95_frame_ms,
              r.subject.max_frame_ms, r.real_time_ok ? "true" : "false");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bssgate: DOA-gated IVA speech separation toolkit"};
  app.set_version_flag("--version", BSSGATE_VERSION);
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "root seed; scene and trainer seeds derive from it");
  app.add_option("--config", g.config_path, "JSON file with optional scene, pipeline and train sections")
      ->check(CLI::ExistingFile);
  app.add_option("--out-dir", g.out_dir, "output directory (created if missing)")->capture_default_str();
  app.add_flag("--verbose,-v", g.verbose, "progress messages on stderr");

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "render a two-mic scene or a DOA training dataset");
  simulate->add_option("--speech", sim.speech, "mono speech WAV (default: synthetic speech)");
  simulate->add_option("--noise", sim.noise, "noise kind: babble, machinery, white");
  simulate->add_option("--noise-wav", sim.noise_wav, "mono noise WAV spread as a diffuse field");
  simulate->add_option("--duration", sim.duration_s, "seconds of synthetic speech")->capture_default_str();
  simulate->add_option("--angle", sim.angle, "source angle in degrees");
  simulate->add_option("--snr", sim.snr, "input SNR in dB");
  simulate->add_option("--t60", sim.t60, "reverberation time in seconds");
  simulate->add_option("--moving", sim.moving, "comma-separated angles, one per segment");
  simulate->add_option("--segment-s", sim.segment_s, "segment length for --moving")->capture_default_str();
  simulate->add_flag("--pcm16", sim.pcm16, "write 16-bit PCM instead of float WAVs");
  simulate->add_flag("--dataset", sim.dataset, "build a labeled DOA feature archive instead of one scene");
  simulate->add_option("--angles", sim.angles, "dataset angles")->capture_default_str();
  simulate->add_option("--snrs", sim.snrs, "dataset SNRs in dB")->capture_default_str();
  simulate->add_option("--clips", sim.clips, "synthetic corpus clips")->capture_default_str();
  simulate->add_option("--clip-duration", sim.clip_s, "synthetic corpus clip length")->capture_default_str();
  simulate->add_option("--corpus", sim.corpus, "speech WAVs to use instead of the synthetic corpus");
  simulate->add_flag("--features-only", sim.features_only, "dataset: skip the per-cell mixture WAVs");

  TrainOpts tr;
  auto* train = app.add_subcommand("train-doa", "train the DOA classifier on a dataset archive");
  train->add_option("--dataset", tr.dataset, "dataset archive directory")->required();
  train->add_option("--model", tr.model, "model JSON path (default: <out-dir>/model.json)");
  train->add_option("--epochs", tr.epochs, "training epochs");
  train->add_option("--batch-size", tr.batch_size, "mini-batch size");
  train->add_option("--step", tr.step, "Adam step size");
  train->add_flag("--use-bias", tr.use_bias, "train bias vectors as well");

  SeparateOpts sep;
  auto* separate = app.add_subcommand("separate", "separate a two-channel recording");
  separate->add_option("--input", sep.input, "2-channel WAV")->required();
  separate->add_option("--model", sep.model, "DOA model JSON");
  separate->add_option("--mode", sep.mode, "gated, per_frame or batch_offline");
  separate->add_option("--output", sep.output, "separated WAV (default: <out-dir>/separated.wav)");
  separate->add_option("--stats", sep.stats, "update stats JSON (default: <out-dir>/stats.json)");
  separate->add_option("--timing-csv", sep.timing_csv, "per-frame timing CSV");
  auto* labels_opt = separate->add_option("--truth-labels", sep.truth_labels, "ground-truth DOA labels CSV");
  separate->add_option("--truth-angle", sep.truth_angle, "ground-truth DOA for a stationary source")
      ->excludes(labels_opt);

  EvaluateOpts ev;
  auto* evaluate = app.add_subcommand("evaluate", "score separated WAVs against a reference");
  evaluate->add_option("--est", ev.est, "estimate WAV or a directory of WAVs")->required();
  evaluate->add_option("--ref", ev.ref, "reference WAV (speech image at mic 1)")->required();
  evaluate->add_option("--mixture", ev.mixture, "mixture WAV for the noisy baseline row");
  evaluate->add_option("--csv", ev.csv, "metrics CSV (default: <out-dir>/metrics.csv)");
  evaluate->add_option("--noise-kind", ev.noise_kind, "condition label for the table");
  evaluate->add_option("--input-snr", ev.input_snr_db, "condition label for the table");

  BenchOpts be;
  auto* bench = app.add_subcommand("bench", "update-count and real-time benchmark on a moving source");
  bench->add_option("--angles", be.angles, "angle per segment")->capture_default_str();
  bench->add_option("--segment-s", be.segment_s, "segment length in seconds")->capture_default_str();
  bench->add_option("--subject", be.subject, "mode under test")->capture_default_str();
  bench->add_option("--baseline", be.baseline, "reference mode")->capture_default_str();
  bench->add_option("--accounting-ms", be.accounting_ms, "accounting frame length")->capture_default_str();
  bench->add_option("--snr", be.snr, "input SNR in dB");
  bench->add_option("--t60", be.t60, "reverberation time in seconds");
  bench->add_option("--model", be.model, "use the DOA model instead of ground-truth labels");
  bench->add_option("--timing-csv", be.timing_csv, "per-frame timing CSV of the subject run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();
  Run run;
  try {
    fs::create_directories(g.out_dir);
    if (simulate->parsed()) {
      run.command = "simulate";
      cmd_simulate(sim, run);
    } else if (train->parsed()) {
      run.command = "train-doa";
      cmd_train(tr, run);
    } else if (separate->parsed()) {
      run.command = "separate";
      cmd_separate(sep, run);
    } else if (evaluate->parsed()) {
      run.command = "evaluate";
      cmd_evaluate(ev, run);
    } else if (bench->parsed()) {
      run.command = "bench";
      cmd_bench(be, run);
    }
    write_manifest(run, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DecodeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
