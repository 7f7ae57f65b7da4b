#include "bssgate/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bssgate/errors.hpp"
#include "bssgate/random.hpp"
#include "bssgate/signals.hpp"
#include "bssgate/vad.hpp"
#include "json.hpp"

namespace bssgate {

std::vector<LabeledFeature> DoaDataset::all_rows() const {
  std::vector<LabeledFeature> out;
  out.reserve(num_rows());
  for (const auto& g : groups) out.insert(out.end(), g.rows.begin(), g.rows.end());
  return out;
}

std::size_t DoaDataset::num_rows() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.rows.size();
  return n;
}

DoaDataset build_doa_dataset(std::span<const double> angles_deg, std::span<const double> snrs_db,
                             std::span<const AudioClip> speech_corpus, const SceneConfig& scene_template,
                             const DatasetOptions& options) {
  if (speech_corpus.empty()) throw PreconditionError("build_doa_dataset: empty speech corpus");
  if (angles_deg.empty() || snrs_db.empty()) throw PreconditionError("build_doa_dataset: no angles or SNRs");
  for (double a : angles_deg)
    if (!(a >= 0.0 && a <= 180.0)) throw ValidationError("angles", "angle outside [0, 180]: " + std::to_string(a));
  scene_template.validate();

  constexpr std::size_t kFrame = 320;
  constexpr std::size_t kHop = 160;
  DoaDataset out;
  std::size_t cell = 0;
  for (double angle : angles_deg) {
    for (double snr : snrs_db) {
      for (std::size_t c = 0; c < speech_corpus.size(); ++c, ++cell) {
        const AudioClip& speech = speech_corpus[c];
        SceneConfig cfg = scene_template;
        cfg.source_angle_deg = angle;
        cfg.snr_db = snr;
        cfg.seed = derive_seed(scene_template.seed, "dataset", cell);
        const AudioClip noise = AudioClip::mono(
            generate_noise(cfg.noise_kind, speech.duration_s(), derive_seed(cfg.seed, "noise"), cfg.sample_rate_hz),
            cfg.sample_rate_hz);

        FeatureGroup group;
        group.angle_deg = angle;
        group.snr_db = snr;
        group.clip_index = c;
        group.seed = cfg.seed;
        group.label = angle_to_class(angle);
        LabeledMixture mix = make_mixture(cfg, speech, noise);

        const auto ch1 = mix.mixture.channel(0);
        const auto ch2 = mix.mixture.channel(1);
        const auto speech1 = mix.clean_speech_at_mics.channel(0);
        const auto noise1 = mix.noise_at_mics.channel(0);
        VadState vad;
        for (std::size_t start = 0; start + kFrame <= ch1.size(); start += kHop) {
          const auto f1 = ch1.subspan(start, kFrame);
          if (!vad_decide(vad, f1).voice) continue;
          CrossCorrelation cc = cross_correlate(f1, ch2.subspan(start, kFrame), kMaxLag, options.weighting);
          const DoaFeature feature = extract_feature(cc);
          if (feature.is_degenerate()) continue;
          group.rows.push_back({feature, group.label});
          group.correlations.push_back(std::move(cc));
          group.frame_index.push_back(start / kHop);
          double es = 0.0, en = 0.0;
          for (std::size_t i = start; i < start + kFrame; ++i) {
            es += speech1[i] * speech1[i];
            en += noise1[i] * noise1[i];
          }
          group.local_snr_db.push_back(10.0 * std::log10((es + 1e-300) / (en + 1e-300)));
        }
        if (options.keep_mixtures) group.mixture = std::move(mix);
        out.groups.push_back(std::move(group));
      }
    }
  }
  return out;
}

std::vector<AudioClip> synthetic_corpus(std::size_t count, double duration_s, std::uint64_t seed) {
  std::vector<AudioClip> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(AudioClip::mono(synth_speech(duration_s, derive_seed(seed, "corpus", i)), kCanonicalRateHz));
  return out;
}

void write_dataset_archive(const DoaDataset& dataset, const std::filesystem::path& dir,
                           const std::string& manifest_extra_json) {
  std::filesystem::create_directories(dir);
  write_feature_csv(dataset.all_rows(), dir / "features.csv");

  nlohmann::json manifest;
  manifest["format"] = "bssgate-doa-dataset/1";
  manifest["num_rows"] = dataset.num_rows();
  manifest["groups"] = nlohmann::json::array();
  std::size_t first_row = 0;
  for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
    const auto& g = dataset.groups[i];
    nlohmann::json entry{{"angle_deg", g.angle_deg},   {"snr_db", g.snr_db},
                         {"clip_index", g.clip_index}, {"seed", g.seed},
                         {"label", g.label},           {"first_row", first_row},
                         {"num_rows", g.rows.size()}};
    if (!g.mixture.mixture.empty()) {
      std::filesystem::create_directories(dir / "wav");
      const std::string name = "wav/cell_" + std::to_string(i) + ".wav";
      write_wav(g.mixture.mixture, dir / name, WavFormat::kFloat32);
      entry["mixture"] = name;
    }
    manifest["groups"].push_back(std::move(entry));
    first_row += g.rows.size();
  }
  manifest["extra"] = nlohmann::json::parse(manifest_extra_json);
  std::ofstream os(dir / "manifest.json");
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

std::vector<LabeledFeature> read_dataset_archive(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.json";
  if (!std::filesystem::exists(manifest)) throw IoError("dataset manifest missing: " + manifest.string());
  return read_feature_csv(dir / "features.csv");
}

}  // namespace bssgate
