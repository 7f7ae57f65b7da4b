// Python bindings. Audio crosses the boundary as float64 numpy arrays shaped
// (channels, samples); configs, stats and models as JSON strings that the
// pure-Python wrapper turns into dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bssgate/audio_io.hpp"
#include "bssgate/bench.hpp"
#include "bssgate/config_io.hpp"
#include "bssgate/doa.hpp"
#include "bssgate/errors.hpp"
#include "bssgate/eval.hpp"
#include "bssgate/gate_pipeline.hpp"
#include "bssgate/room_sim.hpp"

namespace py = pybind11;
using namespace bssgate;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const AudioClip& clip) {
  Array out({clip.num_channels(), clip.num_samples()});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t c = 0; c < clip.num_channels(); ++c)
    for (std::size_t n = 0; n < clip.num_samples(); ++n) view(c, n) = clip.channel(c)[n];
  return out;
}

AudioClip to_clip(const Array& a, int rate) {
  if (a.ndim() == 1) return AudioClip::mono({a.data(), a.data() + a.shape(0)}, rate);
  if (a.ndim() != 2) throw PreconditionError("audio must be 1-D or (channels, samples)");
  std::vector<std::vector<double>> ch(static_cast<std::size_t>(a.shape(0)));
  for (std::size_t c = 0; c < ch.size(); ++c) {
    const double* row = a.data() + c * static_cast<std::size_t>(a.shape(1));
    ch[c].assign(row, row + a.shape(1));
  }
  return AudioClip(std::move(ch), rate);
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw PreconditionError("expected a 1-D array");
  return {a.data(), a.data() + a.shape(0)};
}

py::dict mixture_dict(const LabeledMixture& m) {
  py::dict d;
  d["mixture"] = to_array(m.mixture);
  d["speech_image"] = to_array(m.clean_speech_at_mics);
  d["noise_image"] = to_array(m.noise_at_mics);
  d["true_angle_deg"] = m.true_angle_deg;
  d["snr_db"] = m.snr_db;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "bssgate native core";
  m.attr("__version__") = BSSGATE_VERSION;
  m.attr("SAMPLE_RATE") = kCanonicalRateHz;

  auto base = py::register_exception<Error>(m, "BssgateError");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<DecodeError>(m, "DecodeError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def(
      "read_wav",
      [](const std::string& path) {
        const auto clip = read_wav(path);
        return py::make_tuple(to_array(clip), clip.sample_rate_hz());
      },
      py::arg("path"));
  m.def(
      "write_wav",
      [](const std::string& path, const Array& audio, int rate, bool pcm16) {
        return write_wav(to_clip(audio, rate), path, pcm16 ? WavFormat::kPcm16 : WavFormat::kFloat32)
            .clipped_samples;
      },
      py::arg("path"), py::arg("audio"), py::arg("sample_rate") = kCanonicalRateHz, py::arg("pcm16") = false);

  m.def(
      "stft_roundtrip",
      [](const Array& audio) {
        const auto cfg = StftConfig::standard();
        const auto frames = stft_analyze(to_clip(audio, kCanonicalRateHz), cfg);
        return to_array(istft_synthesize(frames, cfg));
      },
      py::arg("audio"), "STFT analysis followed by overlap-add synthesis");

  m.def(
      "simulate_scene",
      [](const std::string& scene_json, double duration_s) {
        return mixture_dict(simulate_scene(scene_config_from_json(scene_json), duration_s));
      },
      py::arg("scene_json"), py::arg("duration_s"));
  m.def(
      "simulate_moving_source",
      [](const std::string& scene_json, const std::vector<double>& angles, double segment_s) {
        const auto scene = simulate_moving_source(scene_config_from_json(scene_json), angles, segment_s);
        auto d = mixture_dict(scene.mixture);
        d["truth_labels"] = truth_frame_labels(scene, StftConfig::standard());
        return d;
      },
      py::arg("scene_json"), py::arg("angles"), py::arg("segment_s"));

  m.def(
      "run_stream",
      [](const Array& mixture, const std::string& pipeline_json, std::optional<std::string> model_json,
         std::vector<int> truth_labels) {
        const auto cfg = pipeline_config_from_json(pipeline_json);
        std::shared_ptr<const FnnModel> model;
        if (model_json) model = std::make_shared<FnnModel>(model_from_json(*model_json));
        StreamResult r;
        {
          py::gil_scoped_release release;
          r = run_stream(to_clip(mixture, kCanonicalRateHz), cfg, model, truth_labels);
        }
        return py::make_tuple(to_array(r.separated), stats_to_json(r.stats));
      },
      py::arg("mixture"), py::arg("pipeline_json") = "{}", py::arg("model_json") = py::none(),
      py::arg("truth_labels") = std::vector<int>{});

  m.def(
      "sdr", [](const Array& est, const Array& ref) { return sdr(to_vector(est), to_vector(ref)); }, py::arg("est"),
      py::arg("ref"));
  m.def(
      "seg_snr", [](const Array& est, const Array& ref) { return seg_snr(to_vector(est), to_vector(ref)); },
      py::arg("est"), py::arg("ref"));

  m.def(
      "doa_feature",
      [](const Array& ch1, const Array& ch2) {
        const auto f = extract_feature(cross_correlate(to_vector(ch1), to_vector(ch2)));
        return std::vector<double>(f.u.begin(), f.u.end());
      },
      py::arg("ch1"), py::arg("ch2"), "|r(lag)| / max |r| over the 13 lags of one frame");
  m.def(
      "gcc_class",
      [](const Array& ch1, const Array& ch2) {
        return gcc_class(cross_correlate(to_vector(ch1), to_vector(ch2)), kCanonicalRateHz, 0.13);
      },
      py::arg("ch1"), py::arg("ch2"));
  m.def(
      "fnn_train",
      [](const Array& features, const std::vector<int>& labels, const std::string& train_json) {
        if (features.ndim() != 2 || features.shape(1) != kFeatureDim)
          throw PreconditionError("features must be shaped (rows, 13)");
        if (static_cast<std::size_t>(features.shape(0)) != labels.size())
          throw PreconditionError("one label per feature row");
        std::vector<LabeledFeature> rows(labels.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          for (int k = 0; k < kFeatureDim; ++k) rows[i].feature.u[std::size_t(k)] = *features.data(long(i), k);
          rows[i].label = labels[i];
        }
        const auto r = fnn_train(rows, train_config_from_json(train_json));
        return py::make_tuple(model_to_json(r.model), r.train_accuracy, r.validation_accuracy);
      },
      py::arg("features"), py::arg("labels"), py::arg("train_json") = "{}");
  m.def(
      "fnn_predict",
      [](const std::string& model_json, const std::vector<double>& feature) {
        if (feature.size() != kFeatureDim) throw PreconditionError("feature must have 13 values");
        DoaFeature f;
        std::copy(feature.begin(), feature.end(), f.u.begin());
        const auto out = fnn_forward(model_from_json(model_json), f);
        return py::make_tuple(out.label, std::vector<double>(out.probabilities.begin(), out.probabilities.end()));
      },
      py::arg("model_json"), py::arg("feature"));

  m.def(
      "run_bench",
      [](std::optional<std::string> scene_json, std::vector<double> angles, double segment_s,
         const std::string& subject, const std::string& baseline) {
        BenchOptions b;
        if (scene_json) b.scene = scene_config_from_json(*scene_json);
        if (!angles.empty()) b.angles_deg = std::move(angles);
        b.segment_s = segment_s;
        b.subject = parse_pipeline_mode(subject);
        b.baseline = parse_pipeline_mode(baseline);
        py::gil_scoped_release release;
        return bench_to_json(run_bench(b));
      },
      py::arg("scene_json") = py::none(), py::arg("angles") = std::vector<double>{}, py::arg("segment_s") = 3.0,
      py::arg("subject") = "gated", py::arg("baseline") = "per_frame");
}
