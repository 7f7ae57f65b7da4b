#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bssgate/audio_io.hpp"
#include "bssgate/doa.hpp"
#include "bssgate/room_sim.hpp"

namespace bssgate {

// One (angle, snr, clip) cell of the DOA dataset.
struct FeatureGroup {
  double angle_deg = 0.0;
  double snr_db = 0.0;
  std::size_t clip_index = 0;
  std::uint64_t seed = 0;
  int label = 0;
  std::vector<LabeledFeature> rows;  // VAD-active frames only
  std::vector<CrossCorrelation> correlations;  // aligned with rows
  // Per row: frame index, and speech-image to noise energy ratio at mic 1.
  // VAD hangover rows hold noise only and show up here as low local SNR.
  std::vector<std::size_t> frame_index;
  std::vector<double> local_snr_db;
  LabeledMixture mixture;
};

struct DoaDataset {
  std::vector<FeatureGroup> groups;

  std::vector<LabeledFeature> all_rows() const;
  std::size_t num_rows() const;
};

struct DatasetOptions {
  // Keep the mixtures in memory; the archive writer needs them.
  bool keep_mixtures = false;
  // Noise clips are drawn per cell from the template's noise kind.
  CorrelationWeighting weighting = CorrelationWeighting::kPlain;
};

// Cells are visited angle-major, then snr, then clip. Each cell's seed is
// derived from the template seed and the cell index, so any subset of cells
// can be rebuilt on its own.
DoaDataset build_doa_dataset(std::span<const double> angles_deg, std::span<const double> snrs_db,
                             std::span<const AudioClip> speech_corpus, const SceneConfig& scene_template,
                             const DatasetOptions& options = {});

// Synthetic speech corpus: `count` clips of `duration_s` seconds.
std::vector<AudioClip> synthetic_corpus(std::size_t count, double duration_s, std::uint64_t seed);

// Archive layout: manifest.json, features.csv and, when mixtures were kept,
// wav/cell_<i>.wav.
void write_dataset_archive(const DoaDataset& dataset, const std::filesystem::path& dir,
                           const std::string& manifest_extra_json = "{}");
// Reads features.csv after checking manifest.json exists.
std::vector<LabeledFeature> read_dataset_archive(const std::filesystem::path& dir);

}  // namespace bssgate
