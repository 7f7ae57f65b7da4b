#include "bssgate/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "bssgate/errors.hpp"
#include "bssgate/fft.hpp"
#include "json.hpp"

namespace bssgate {

namespace {

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

const std::vector<double>& mono_channel(const AudioClip& clip, const char* field) {
  if (clip.num_channels() != 1) throw PreconditionError(std::string(field) + ": expected a mono clip");
  return clip.channels().front();
}

double to_db_capped(double num, double den) {
  if (den <= 0.0) return kSdrCapDb;
  return std::min(10.0 * std::log10(num / den), kSdrCapDb);
}

}  // namespace

double sdr(std::span<const double> est, std::span<const double> ref, std::size_t taps) {
  if (est.size() != ref.size()) throw PreconditionError("sdr: est and ref lengths differ");
  const double ref_energy = energy(ref);
  if (!(ref_energy > 0.0)) throw PreconditionError("sdr: reference is silent");
  const std::size_t n = ref.size();
  const auto lags = static_cast<long>(taps);
  const std::size_t k = 2 * taps + 1;

  // Columns are ref delayed by d in [-taps, taps] with zero fill. The Gram
  // matrix is the full autocorrelation minus the samples each pair of delayed
  // copies loses at the edges.
  std::vector<double> acf(k, 0.0);
  for (std::size_t l = 0; l < k && l < n; ++l) {
    double s = 0.0;
    for (std::size_t i = l; i < n; ++i) s += ref[i] * ref[i - l];
    acf[l] = s;
  }
  const auto len = static_cast<long>(n);
  Eigen::MatrixXd g(k, k);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = r; c < k; ++c) {
      const long dr = static_cast<long>(r) - lags;
      const long lag = static_cast<long>(c) - static_cast<long>(r);
      // sum of ref[j] ref[j - lag] for j in [max(lag, -dr), min(N, N - dr))
      double v = acf[static_cast<std::size_t>(lag)];
      const long lo = std::max(lag, -dr);
      const long hi = std::min(len, len - dr);
      for (long j = lag; j < std::min(lo, len); ++j)
        v -= ref[static_cast<std::size_t>(j)] * ref[static_cast<std::size_t>(j - lag)];
      for (long j = std::max(hi, lag); j < len; ++j)
        v -= ref[static_cast<std::size_t>(j)] * ref[static_cast<std::size_t>(j - lag)];
      if (hi <= lo) v = 0.0;
      g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      g(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = v;
    }
  }
  Eigen::VectorXd b(k);
  for (std::size_t r = 0; r < k; ++r) {
    const long d = static_cast<long>(r) - lags;
    double s = 0.0;
    const long begin = std::max(0L, d);
    const long end = std::min(static_cast<long>(n), static_cast<long>(n) + d);
    for (long o = begin; o < end; ++o) s += est[static_cast<std::size_t>(o)] * ref[static_cast<std::size_t>(o - d)];
    b(static_cast<Eigen::Index>(r)) = s;
  }
  const Eigen::VectorXd a = g.ldlt().solve(b);

  std::vector<double> target(n, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    const long d = static_cast<long>(r) - lags;
    const double coef = a(static_cast<Eigen::Index>(r));
    const long begin = std::max(0L, d);
    const long end = std::min(static_cast<long>(n), static_cast<long>(n) + d);
    for (long o = begin; o < end; ++o) target[static_cast<std::size_t>(o)] += coef * ref[static_cast<std::size_t>(o - d)];
  }
  double t_energy = 0.0, e_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t_energy += target[i] * target[i];
    const double e = est[i] - target[i];
    e_energy += e * e;
  }
  if (!(t_energy > 0.0)) return -kSdrCapDb;
  // Residuals at rounding level count as exact reconstruction.
  if (e_energy <= 1e-20 * t_energy) return kSdrCapDb;
  return to_db_capped(t_energy, e_energy);
}

double sdr(const AudioClip& est, const AudioClip& ref, std::size_t taps) {
  return sdr(mono_channel(est, "est"), mono_channel(ref, "ref"), taps);
}

double seg_snr(std::span<const double> est, std::span<const double> ref, std::size_t frame_len) {
  if (est.size() != ref.size()) throw PreconditionError("seg_snr: est and ref lengths differ");
  if (frame_len == 0) throw PreconditionError("seg_snr: frame_len must be positive");
  if (!(energy(ref) > 0.0)) throw PreconditionError("seg_snr: reference is silent");
  const std::size_t frames = ref.size() / frame_len;
  std::vector<double> energies(frames);
  double peak = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    energies[f] = energy(ref.subspan(f * frame_len, frame_len));
    peak = std::max(peak, energies[f]);
  }
  if (!(peak > 0.0)) throw PreconditionError("seg_snr: reference has no full voiced frame");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    // Voiced: within 40 dB of the loudest frame.
    if (energies[f] <= 1e-4 * peak) continue;
    double err = 0.0;
    for (std::size_t i = f * frame_len; i < (f + 1) * frame_len; ++i) err += (est[i] - ref[i]) * (est[i] - ref[i]);
    const double db = err > 0.0 ? 10.0 * std::log10(energies[f] / err) : kSegSnrCeilDb;
    sum += std::clamp(db, kSegSnrFloorDb, kSegSnrCeilDb);
    ++count;
  }
  return sum / static_cast<double>(count);
}

double seg_snr(const AudioClip& est, const AudioClip& ref, std::size_t frame_len) {
  return seg_snr(mono_channel(est, "est"), mono_channel(ref, "ref"), frame_len);
}

long best_alignment_shift(std::span<const double> est, std::span<const double> ref, std::size_t max_shift) {
  if (est.size() != ref.size()) throw PreconditionError("alignment: est and ref lengths differ");
  const std::size_t n = ref.size();
  if (n == 0) return 0;
  // Circular cross-correlation via FFT: c[s] = sum_n est[(n + s) mod N] ref[n].
  RealFft fft(n);
  const std::size_t bins = n / 2 + 1;
  std::vector<std::complex<double>> fe(bins), fr(bins);
  fft.forward(est, fe);
  fft.forward(ref, fr);
  for (std::size_t k = 0; k < bins; ++k) fe[k] *= std::conj(fr[k]);
  std::vector<double> c(n);
  fft.inverse(fe, c);
  const long limit = static_cast<long>(std::min(max_shift, (n - 1) / 2));
  long best = 0;
  double best_value = c[0];
  for (long s = 1; s <= limit; ++s) {
    for (long cand : {s, -s}) {
      const double v = c[static_cast<std::size_t>((cand % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n))];
      if (v > best_value * (1.0 + 1e-12) + 1e-300) {
        best_value = v;
        best = cand;
      }
    }
  }
  return best;
}

std::vector<double> align_to(std::span<const double> est, std::span<const double> ref, std::size_t max_shift) {
  const long s = best_alignment_shift(est, ref, max_shift);
  const auto n = static_cast<long>(est.size());
  std::vector<double> out(est.size());
  for (long i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = est[static_cast<std::size_t>(((i + s) % n + n) % n)];
  return out;
}

SeparationMetrics score_estimate(const std::string& label, std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) throw PreconditionError("'" + label + "' length differs from the reference");
  SeparationMetrics m;
  m.label = label;
  m.alignment_shift = best_alignment_shift(est, ref);
  const auto aligned = align_to(est, ref);
  m.sdr_db = sdr(aligned, ref);
  m.seg_snr_db = seg_snr(aligned, ref);
  return m;
}

std::vector<SeparationMetrics> evaluate_run(const AudioClip& mixture, const AudioClip& reference,
                                            const std::vector<ModeOutput>& outputs, const std::string& noise_kind,
                                            double input_snr_db) {
  const auto& ref = mono_channel(reference, "reference");
  std::vector<SeparationMetrics> rows;
  auto score = [&](const std::string& label, std::span<const double> est) {
    auto m = score_estimate(label, est, ref);
    m.noise_kind = noise_kind;
    m.input_snr_db = input_snr_db;
    rows.push_back(std::move(m));
  };
  score("noisy", mixture.channel(0));
  for (const auto& out : outputs) score(out.mode, mono_channel(out.separated, out.mode.c_str()));
  return rows;
}

std::string metrics_to_csv(const std::vector<SeparationMetrics>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "label,metric,value_db,noise_kind,input_snr_db,alignment_shift\n";
  for (const auto& r : rows) {
    os << r.label << ",sdr," << r.sdr_db << ',' << r.noise_kind << ',' << r.input_snr_db << ',' << r.alignment_shift
       << '\n';
    os << r.label << ",seg_snr," << r.seg_snr_db << ',' << r.noise_kind << ',' << r.input_snr_db << ','
       << r.alignment_shift << '\n';
  }
  return os.str();
}

std::string metrics_to_json(const std::vector<SeparationMetrics>& rows) {
  nlohmann::json j;
  j["note"] = kMetricsNote;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"label", r.label},
                         {"sdr_db", r.sdr_db},
                         {"seg_snr_db", r.seg_snr_db},
                         {"noise_kind", r.noise_kind},
                         {"input_snr_db", r.input_snr_db},
                         {"alignment_shift", r.alignment_shift}});
  return j.dump(2);
}

}  // namespace bssgate
