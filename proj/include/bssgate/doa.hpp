#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bssgate {

inline constexpr int kMaxLag = 6;  // floor(0.13 m * 16 kHz / 343 m/s)
inline constexpr int kFeatureDim = 2 * kMaxLag + 1;
inline constexpr int kNumClasses = 7;  // 0..180 deg in 30 deg steps
inline constexpr int kHiddenUnits = 8;
inline constexpr double kClassSpacingDeg = 30.0;

// floor(d * fs / c): the largest physically valid inter-mic lag in samples.
int max_valid_lag(double mic_spacing_m, int sample_rate_hz);

// Cross-correlation on lags [-m, m]. values[lag + m] holds the biased
// estimate (1/N) sum_n x1(n) x2(n + lag), so a positive lag means channel 2
// lags channel 1.
struct CrossCorrelation {
  std::vector<double> values;
  int max_lag = kMaxLag;

  double at(int lag) const { return values.at(static_cast<std::size_t>(lag + max_lag)); }
};

enum class CorrelationWeighting { kPlain, kPhat };

CrossCorrelation cross_correlate(std::span<const double> ch1, std::span<const double> ch2, int max_lag = kMaxLag,
                                 CorrelationWeighting weighting = CorrelationWeighting::kPlain);
// Plain correlation into an existing result; does not allocate once `out`
// has been sized.
void cross_correlate_into(std::span<const double> ch1, std::span<const double> ch2, int max_lag,
                          CrossCorrelation& out);

// Lag of the correlation peak in seconds. Ties go to the smaller |lag|, and
// between +l and -l to +l.
double estimate_tdoa_gcc(const CrossCorrelation& cc, int sample_rate_hz);
int peak_lag(const CrossCorrelation& cc);

// arccos(clamp(eta * c / d, -1, 1)) in degrees.
double tdoa_to_angle(double eta_s, double mic_spacing_m);

// Nearest class on the 30 deg grid, clamped to [0, 6].
int angle_to_class(double angle_deg);
inline double class_to_angle(int label) { return kClassSpacingDeg * label; }

// Max-normalized absolute cross-correlation. The all-zero correlation maps to
// the all-zero feature, which downstream code treats as "no estimate".
struct DoaFeature {
  std::array<double, kFeatureDim> u{};
  bool is_degenerate() const;
};

DoaFeature extract_feature(const CrossCorrelation& cc);

// GCC-only DOA class for a feature-free baseline.
int gcc_class(const CrossCorrelation& cc, int sample_rate_hz, double mic_spacing_m);

// ---------------------------------------------------------------------------
// Classifier

struct FnnModel {
  using HiddenWeights = Eigen::Matrix<double, kHiddenUnits, kFeatureDim, Eigen::RowMajor>;
  using OutputWeights = Eigen::Matrix<double, kNumClasses, kHiddenUnits, Eigen::RowMajor>;

  HiddenWeights w1 = HiddenWeights::Zero();
  OutputWeights w2 = OutputWeights::Zero();
  // Only consulted when use_bias is set; the default network is purely linear
  // between layers.
  Eigen::Matrix<double, kHiddenUnits, 1> b1 = Eigen::Matrix<double, kHiddenUnits, 1>::Zero();
  Eigen::Matrix<double, kNumClasses, 1> b2 = Eigen::Matrix<double, kNumClasses, 1>::Zero();
  bool use_bias = false;
  std::string config_hash;

  bool is_finite() const;
  // FNV-1a over the weight bytes, hex encoded.
  std::string weight_hash() const;
};

struct FnnOutput {
  std::array<double, kNumClasses> probabilities{};
  int label = 0;  // argmax, ties toward the lower index
};

FnnOutput fnn_forward(const FnnModel& model, const DoaFeature& feature);

struct LabeledFeature {
  DoaFeature feature;
  int label = 0;
};

struct TrainConfig {
  double step = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double validation_fraction = 0.2;
  bool use_bias = false;
  std::uint64_t seed = 0;

  std::string hash() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  FnnModel model;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;
  std::vector<EpochStats> curve;
};

// Adam on mean categorical cross-entropy. Deterministic for a fixed seed.
TrainResult fnn_train(std::span<const LabeledFeature> dataset, const TrainConfig& cfg);

double classification_accuracy(const FnnModel& model, std::span<const LabeledFeature> data);

struct FnnGradients {
  FnnModel::HiddenWeights w1 = FnnModel::HiddenWeights::Zero();
  FnnModel::OutputWeights w2 = FnnModel::OutputWeights::Zero();
  Eigen::Matrix<double, kHiddenUnits, 1> b1 = Eigen::Matrix<double, kHiddenUnits, 1>::Zero();
  Eigen::Matrix<double, kNumClasses, 1> b2 = Eigen::Matrix<double, kNumClasses, 1>::Zero();
};

double cross_entropy_loss(const FnnModel& model, const DoaFeature& feature, int label);
// Analytic gradient of cross_entropy_loss; returns the loss.
double loss_gradient(const FnnModel& model, const DoaFeature& feature, int label, FnnGradients& grad);

// Max over all weights of |analytic - numeric| / max(|analytic| + |numeric|, 1e-6)
// with central differences of the given step.
double gradient_check(const FnnModel& model, const DoaFeature& feature, int label, double step = 1e-5);

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kModelFormatVersion = "bssgate-fnn-doa/1";

std::string model_to_json(const FnnModel& model);
FnnModel model_from_json(const std::string& text);
void save_model(const FnnModel& model, const std::filesystem::path& path);
FnnModel load_model(const std::filesystem::path& path);

// CSV rows of 13 comma-separated floats followed by an integer label.
void write_feature_csv(std::span<const LabeledFeature> rows, const std::filesystem::path& path);
// Throws DecodeError listing the offending row numbers (1-based).
std::vector<LabeledFeature> read_feature_csv(const std::filesystem::path& path);

}  // namespace bssgate
