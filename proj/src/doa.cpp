#include "bssgate/doa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "bssgate/errors.hpp"
#include "bssgate/fft.hpp"
#include "bssgate/room_sim.hpp"
#include "json.hpp"

namespace bssgate {

int max_valid_lag(double mic_spacing_m, int sample_rate_hz) {
  return static_cast<int>(std::floor(mic_spacing_m * sample_rate_hz / kSpeedOfSound));
}

CrossCorrelation cross_correlate(std::span<const double> ch1, std::span<const double> ch2, int max_lag,
                                 CorrelationWeighting weighting) {
  if (ch1.size() != ch2.size()) throw PreconditionError("cross_correlate: frame length mismatch");
  if (max_lag < 0 || ch1.size() < static_cast<std::size_t>(2 * max_lag + 1))
    throw PreconditionError("cross_correlate: frame shorter than 2m + 1");
  const std::size_t n = ch1.size();
  CrossCorrelation cc;
  if (weighting == CorrelationWeighting::kPlain) {
    cross_correlate_into(ch1, ch2, max_lag, cc);
    return cc;
  }
  cc.max_lag = max_lag;
  cc.values.assign(static_cast<std::size_t>(2 * max_lag + 1), 0.0);

  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  RealFft fft(m);
  std::vector<std::complex<double>> a(fft.bins()), b(fft.bins());
  fft.forward(ch1, a);
  fft.forward(ch2, b);
  double peak = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = std::conj(a[k]) * b[k];
    peak = std::max(peak, std::abs(a[k]));
  }
  // bins more than 30 dB under the strongest carry mostly leakage and
  // rounding noise; whitening them would swamp the estimate
  const double floor = 1e-3 * peak;
  for (auto& g : a) {
    const double mag = std::abs(g);
    g = mag > floor && mag > 0.0 ? g / mag : std::complex<double>{};
  }
  std::vector<double> r(m);
  fft.inverse(a, r);
  for (int lag = -max_lag; lag <= max_lag; ++lag)
    cc.values[static_cast<std::size_t>(lag + max_lag)] =
        r[static_cast<std::size_t>((lag + static_cast<long>(m)) % static_cast<long>(m))];
  return cc;
}

void cross_correlate_into(std::span<const double> ch1, std::span<const double> ch2, int max_lag,
                          CrossCorrelation& out) {
  if (ch1.size() != ch2.size()) throw PreconditionError("cross_correlate: frame length mismatch");
  if (max_lag < 0 || ch1.size() < static_cast<std::size_t>(2 * max_lag + 1))
    throw PreconditionError("cross_correlate: frame shorter than 2m + 1");
  const std::size_t n = ch1.size();
  out.max_lag = max_lag;
  out.values.resize(static_cast<std::size_t>(2 * max_lag + 1));
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    const std::size_t lo = lag < 0 ? static_cast<std::size_t>(-lag) : 0;
    const std::size_t hi = lag > 0 ? n - static_cast<std::size_t>(lag) : n;
    for (std::size_t i = lo; i < hi; ++i) acc += ch1[i] * ch2[static_cast<std::size_t>(static_cast<long>(i) + lag)];
    out.values[static_cast<std::size_t>(lag + max_lag)] = acc / static_cast<double>(n);
  }
}

int peak_lag(const CrossCorrelation& cc) {
  int best = 0;
  double best_value = cc.at(0);
  for (int mag = 1; mag <= cc.max_lag; ++mag)
    for (int lag : {mag, -mag})
      if (cc.at(lag) > best_value) {
        best_value = cc.at(lag);
        best = lag;
      }
  return best;
}

double estimate_tdoa_gcc(const CrossCorrelation& cc, int sample_rate_hz) {
  return static_cast<double>(peak_lag(cc)) / static_cast<double>(sample_rate_hz);
}

double tdoa_to_angle(double eta_s, double mic_spacing_m) {
  const double c = std::clamp(eta_s * kSpeedOfSound / mic_spacing_m, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

int angle_to_class(double angle_deg) {
  const int label = static_cast<int>(std::lround(angle_deg / kClassSpacingDeg));
  return std::clamp(label, 0, kNumClasses - 1);
}

bool DoaFeature::is_degenerate() const {
  return std::all_of(u.begin(), u.end(), [](double v) { return v == 0.0; });
}

DoaFeature extract_feature(const CrossCorrelation& cc) {
  if (cc.values.size() != static_cast<std::size_t>(kFeatureDim))
    throw PreconditionError("extract_feature: expected 13 correlation lags");
  DoaFeature f;
  double peak = 0.0;
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = std::abs(cc.values[i]);
    peak = std::max(peak, f.u[i]);
  }
  if (peak > 0.0)
    for (double& v : f.u) v /= peak;
  return f;
}

int gcc_class(const CrossCorrelation& cc, int sample_rate_hz, double mic_spacing_m) {
  return angle_to_class(tdoa_to_angle(estimate_tdoa_gcc(cc, sample_rate_hz), mic_spacing_m));
}

// ---------------------------------------------------------------------------
// Classifier

namespace {

using FeatureVec = Eigen::Matrix<double, kFeatureDim, 1>;
using HiddenVec = Eigen::Matrix<double, kHiddenUnits, 1>;
using OutputVec = Eigen::Matrix<double, kNumClasses, 1>;

FeatureVec as_vector(const DoaFeature& f) { return Eigen::Map<const FeatureVec>(f.u.data()); }

struct Activations {
  HiddenVec pre;
  HiddenVec hidden;
  OutputVec prob;
};

Activations forward_pass(const FnnModel& model, const DoaFeature& feature) {
  Activations a;
  a.pre = model.w1 * as_vector(feature);
  if (model.use_bias) a.pre += model.b1;
  a.hidden = a.pre.cwiseMax(0.0);
  OutputVec logits = model.w2 * a.hidden;
  if (model.use_bias) logits += model.b2;
  const double top = logits.maxCoeff();
  a.prob = (logits.array() - top).exp();
  a.prob /= a.prob.sum();
  return a;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void check_label(int label) {
  if (label < 0 || label >= kNumClasses) throw PreconditionError("label out of range [0, 6]");
}

}  // namespace

bool FnnModel::is_finite() const {
  return w1.allFinite() && w2.allFinite() && (!use_bias || (b1.allFinite() && b2.allFinite()));
}

std::string FnnModel::weight_hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  h = fnv1a(w1.data(), sizeof(double) * static_cast<std::size_t>(w1.size()), h);
  h = fnv1a(w2.data(), sizeof(double) * static_cast<std::size_t>(w2.size()), h);
  if (use_bias) {
    h = fnv1a(b1.data(), sizeof(double) * static_cast<std::size_t>(b1.size()), h);
    h = fnv1a(b2.data(), sizeof(double) * static_cast<std::size_t>(b2.size()), h);
  }
  return hex64(h);
}

FnnOutput fnn_forward(const FnnModel& model, const DoaFeature& feature) {
  if (!model.is_finite()) throw NumericalError("fnn_forward: model has non-finite weights");
  const Activations a = forward_pass(model, feature);
  FnnOutput out;
  for (int k = 0; k < kNumClasses; ++k) {
    out.probabilities[static_cast<std::size_t>(k)] = a.prob(k);
    if (a.prob(k) > a.prob(out.label)) out.label = k;
  }
  return out;
}

double cross_entropy_loss(const FnnModel& model, const DoaFeature& feature, int label) {
  check_label(label);
  const Activations a = forward_pass(model, feature);
  return -std::log(std::max(a.prob(label), 1e-300));
}

double loss_gradient(const FnnModel& model, const DoaFeature& feature, int label, FnnGradients& grad) {
  check_label(label);
  const Activations a = forward_pass(model, feature);
  OutputVec delta_out = a.prob;
  delta_out(label) -= 1.0;
  grad.w2 = delta_out * a.hidden.transpose();
  HiddenVec delta_hidden = model.w2.transpose() * delta_out;
  for (int j = 0; j < kHiddenUnits; ++j)
    if (!(a.pre(j) > 0.0)) delta_hidden(j) = 0.0;
  grad.w1 = delta_hidden * as_vector(feature).transpose();
  grad.b2 = model.use_bias ? delta_out : OutputVec::Zero();
  grad.b1 = model.use_bias ? delta_hidden : HiddenVec::Zero();
  return -std::log(std::max(a.prob(label), 1e-300));
}

double gradient_check(const FnnModel& model, const DoaFeature& feature, int label, double step) {
  FnnGradients analytic;
  loss_gradient(model, feature, label, analytic);
  double worst = 0.0;
  auto compare = [&](double analytic_value, auto perturb) {
    FnnModel plus = model, minus = model;
    perturb(plus, +step);
    perturb(minus, -step);
    const double numeric =
        (cross_entropy_loss(plus, feature, label) - cross_entropy_loss(minus, feature, label)) / (2.0 * step);
    const double denom = std::max(std::abs(analytic_value) + std::abs(numeric), 1e-6);
    worst = std::max(worst, std::abs(analytic_value - numeric) / denom);
  };
  for (int r = 0; r < kHiddenUnits; ++r)
    for (int c = 0; c < kFeatureDim; ++c)
      compare(analytic.w1(r, c), [&](FnnModel& m, double h) { m.w1(r, c) += h; });
  for (int r = 0; r < kNumClasses; ++r)
    for (int c = 0; c < kHiddenUnits; ++c)
      compare(analytic.w2(r, c), [&](FnnModel& m, double h) { m.w2(r, c) += h; });
  if (model.use_bias) {
    for (int r = 0; r < kHiddenUnits; ++r) compare(analytic.b1(r), [&](FnnModel& m, double h) { m.b1(r) += h; });
    for (int r = 0; r < kNumClasses; ++r) compare(analytic.b2(r), [&](FnnModel& m, double h) { m.b2(r) += h; });
  }
  return worst;
}

std::string TrainConfig::hash() const {
  std::ostringstream os;
  os << std::setprecision(17) << step << ',' << beta1 << ',' << beta2 << ',' << epsilon << ',' << batch_size << ','
     << epochs << ',' << validation_fraction << ',' << use_bias << ',' << seed;
  const std::string s = os.str();
  return hex64(fnv1a(s.data(), s.size(), 0xCBF29CE484222325ULL));
}

double classification_accuracy(const FnnModel& model, std::span<const LabeledFeature> data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& row : data) hits += fnn_forward(model, row.feature).label == row.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

template <typename Mat>
struct AdamSlot {
  Mat m = Mat::Zero();
  Mat v = Mat::Zero();
  void step(Mat& param, const Mat& grad, const TrainConfig& cfg, double bc1, double bc2) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    param.array() -= cfg.step * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
  }
};

}  // namespace

TrainResult fnn_train(std::span<const LabeledFeature> dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw PreconditionError("fnn_train: empty dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (dataset[i].label < 0 || dataset[i].label >= kNumClasses)
      throw PreconditionError("fnn_train: label out of range at row " + std::to_string(i + 1));
  if (cfg.batch_size == 0) throw ValidationError("batch_size", "must be positive");
  if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
    throw ValidationError("validation_fraction", "must lie in [0, 1)");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(dataset.size())));
  if (n_val >= dataset.size()) n_val = 0;
  std::vector<LabeledFeature> train, val;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < order.size() - n_val ? train : val).push_back(dataset[order[i]]);

  TrainResult result;
  FnnModel& model = result.model;
  model.use_bias = cfg.use_bias;
  model.config_hash = cfg.hash();
  std::normal_distribution<double> he1(0.0, std::sqrt(2.0 / kFeatureDim));
  std::normal_distribution<double> he2(0.0, std::sqrt(2.0 / kHiddenUnits));
  for (int r = 0; r < kHiddenUnits; ++r)
    for (int c = 0; c < kFeatureDim; ++c) model.w1(r, c) = he1(rng);
  for (int r = 0; r < kNumClasses; ++r)
    for (int c = 0; c < kHiddenUnits; ++c) model.w2(r, c) = he2(rng);

  AdamSlot<FnnModel::HiddenWeights> adam_w1;
  AdamSlot<FnnModel::OutputWeights> adam_w2;
  AdamSlot<Eigen::Matrix<double, kHiddenUnits, 1>> adam_b1;
  AdamSlot<Eigen::Matrix<double, kNumClasses, 1>> adam_b2;
  std::size_t t = 0;

  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  FnnGradients grad, sum;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(idx.size(), start + cfg.batch_size);
      sum = FnnGradients{};
      for (std::size_t i = start; i < end; ++i) {
        const auto& row = train[idx[i]];
        epoch_loss += loss_gradient(model, row.feature, row.label, grad);
        sum.w1 += grad.w1;
        sum.w2 += grad.w2;
        sum.b1 += grad.b1;
        sum.b2 += grad.b2;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++t;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      FnnModel::HiddenWeights g1 = sum.w1 * inv;
      FnnModel::OutputWeights g2 = sum.w2 * inv;
      adam_w1.step(model.w1, g1, cfg, bc1, bc2);
      adam_w2.step(model.w2, g2, cfg, bc1, bc2);
      if (model.use_bias) {
        Eigen::Matrix<double, kHiddenUnits, 1> gb1 = sum.b1 * inv;
        Eigen::Matrix<double, kNumClasses, 1> gb2 = sum.b2 * inv;
        adam_b1.step(model.b1, gb1, cfg, bc1, bc2);
        adam_b2.step(model.b2, gb2, cfg, bc1, bc2);
      }
    }
    if (!model.is_finite()) throw NumericalError("fnn_train: weights diverged at epoch " + std::to_string(epoch));
    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.loss = epoch_loss / static_cast<double>(std::max<std::size_t>(train.size(), 1));
    stats.train_accuracy = classification_accuracy(model, train);
    stats.validation_accuracy = val.empty() ? stats.train_accuracy : classification_accuracy(model, val);
    result.curve.push_back(stats);
  }
  result.train_accuracy = result.curve.empty() ? classification_accuracy(model, train) : result.curve.back().train_accuracy;
  result.validation_accuracy = result.curve.empty() ? result.train_accuracy : result.curve.back().validation_accuracy;
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

std::string model_to_json(const FnnModel& model) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["input_dim"] = kFeatureDim;
  j["hidden_dim"] = kHiddenUnits;
  j["output_dim"] = kNumClasses;
  j["use_bias"] = model.use_bias;
  j["config_hash"] = model.config_hash;
  j["w1_shape"] = {kHiddenUnits, kFeatureDim};
  j["w2_shape"] = {kNumClasses, kHiddenUnits};
  j["w1"] = std::vector<double>(model.w1.data(), model.w1.data() + model.w1.size());
  j["w2"] = std::vector<double>(model.w2.data(), model.w2.data() + model.w2.size());
  if (model.use_bias) {
    j["b1"] = std::vector<double>(model.b1.data(), model.b1.data() + model.b1.size());
    j["b2"] = std::vector<double>(model.b2.data(), model.b2.data() + model.b2.size());
  }
  j["weight_hash"] = model.weight_hash();
  return j.dump(2);
}

FnnModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("json", e.what());
  }
  if (j.value("format_version", "") != kModelFormatVersion)
    throw DecodeError("format_version", "expected " + std::string(kModelFormatVersion));
  auto read = [&](const char* key, auto& mat, int rows, int cols) {
    const std::string shape_key = std::string(key) + "_shape";
    if (j.contains(shape_key) && j[shape_key] != nlohmann::json({rows, cols}))
      throw DecodeError(shape_key, "unexpected shape");
    if (!j.contains(key) || !j[key].is_array()) throw DecodeError(key, "missing weight array");
    const auto values = j[key].template get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(rows * cols)) throw DecodeError(key, "wrong element count");
    std::copy(values.begin(), values.end(), mat.data());
  };
  FnnModel model;
  model.use_bias = j.value("use_bias", false);
  model.config_hash = j.value("config_hash", "");
  read("w1", model.w1, kHiddenUnits, kFeatureDim);
  read("w2", model.w2, kNumClasses, kHiddenUnits);
  if (model.use_bias) {
    read("b1", model.b1, kHiddenUnits, 1);
    read("b2", model.b2, kNumClasses, 1);
  }
  if (!model.is_finite()) throw DecodeError("w1", "non-finite weights");
  return model;
}

void save_model(const FnnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << model_to_json(model) << '\n';
}

FnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

void write_feature_csv(std::span<const LabeledFeature> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  for (const auto& row : rows) {
    for (double v : row.feature.u) out << v << ',';
    out << row.label << '\n';
  }
}

std::vector<LabeledFeature> read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<LabeledFeature> rows;
  std::vector<std::size_t> bad;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    LabeledFeature row;
    bool ok = cells.size() == static_cast<std::size_t>(kFeatureDim + 1);
    try {
      for (std::size_t i = 0; ok && i < static_cast<std::size_t>(kFeatureDim); ++i) {
        std::size_t used = 0;
        row.feature.u[i] = std::stod(cells[i], &used);
        ok = used == cells[i].size() && std::isfinite(row.feature.u[i]);
      }
      if (ok) {
        std::size_t used = 0;
        row.label = std::stoi(cells.back(), &used);
        ok = used == cells.back().size() && row.label >= 0 && row.label < kNumClasses;
      }
    } catch (const std::exception&) {
      ok = false;
    }
    if (ok)
      rows.push_back(row);
    else
      bad.push_back(line_no);
  }
  if (!bad.empty()) {
    std::string list;
    for (std::size_t i = 0; i < bad.size() && i < 20; ++i) list += (i ? "," : "") + std::to_string(bad[i]);
    if (bad.size() > 20) list += ",...";
    throw DecodeError("rows", std::to_string(bad.size()) + " malformed row(s) in " + path.string() + ": " + list);
  }
  return rows;
}

}  // namespace bssgate
