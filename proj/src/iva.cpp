#include "bssgate/iva.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bssgate/errors.hpp"
#include "json.hpp"

namespace bssgate {

using cd = std::complex<double>;

DemixingStack DemixingStack::identity(std::size_t num_bins) {
  DemixingStack s;
  s.w.assign(num_bins, Matrix2c::Identity());
  return s;
}

bool DemixingStack::is_finite() const {
  return std::all_of(w.begin(), w.end(), [](const Matrix2c& m) { return m.allFinite(); });
}

void IvaConfig::validate() const {
  if (!(eta > 0.0)) throw ValidationError("iva.eta", "must be positive");
  if (max_iters < 1) throw ValidationError("iva.max_iters", "must be >= 1");
  if (!(tol > 0.0)) throw ValidationError("iva.tol", "must be positive");
  if (buffer_frames < 1) throw ValidationError("iva.buffer_frames", "must be >= 1");
  if (!(max_condition > 1.0)) throw ValidationError("iva.max_condition", "must exceed 1");
  if (!(divergence_ratio > 1.0)) throw ValidationError("iva.divergence_ratio", "must exceed 1");
}

SourceEstimate SourceEstimate::zeros(std::size_t num_bins) {
  SourceEstimate s;
  s.y.assign(kNumSources, ComplexVector(num_bins));
  return s;
}

namespace {

void check_frame(const DemixingStack& w, const SpectralFrame& x) {
  if (x.num_channels() != kNumSources || x.num_bins() != w.num_bins())
    throw PreconditionError("demixing stack and spectral frame dimensions differ");
}

double sq(const cd& z) { return z.real() * z.real() + z.imag() * z.imag(); }

void enforce_condition(Matrix2c& m, double cap) {
  if (condition_number(m) <= cap) return;
  Eigen::JacobiSVD<Matrix2c> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector2d s = svd.singularValues();
  s(1) = std::max(s(1), s(0) / cap);
  m = svd.matrixU() * s.cast<cd>().asDiagonal() * svd.matrixV().adjoint();
}

double max_norm(const DemixingStack& w) {
  double m = 0.0;
  for (const auto& b : w.w) m = std::max(m, b.norm());
  return m;
}

}  // namespace

double condition_number(const Matrix2c& m) {
  const double fro2 = m.squaredNorm();
  const double det = std::abs(m.determinant());
  if (!(det > 0.0)) return std::numeric_limits<double>::infinity();
  // sigma1^2 + sigma2^2 = fro2, sigma1 * sigma2 = det
  const double disc = std::sqrt(std::max(0.0, fro2 * fro2 - 4.0 * det * det));
  const double s1sq = 0.5 * (fro2 + disc);
  return s1sq / det;
}

void apply_demixing(const DemixingStack& w, const SpectralFrame& x, SourceEstimate& out) {
  check_frame(w, x);
  if (out.y.size() != kNumSources || out.num_bins() != w.num_bins())
    throw PreconditionError("apply_demixing: output has the wrong shape");
  const auto& x0 = x.coeffs[0];
  const auto& x1 = x.coeffs[1];
  for (std::size_t f = 0; f < w.num_bins(); ++f) {
    const Matrix2c& m = w.w[f];
    out.y[0][f] = m(0, 0) * x0[f] + m(0, 1) * x1[f];
    out.y[1][f] = m(1, 0) * x0[f] + m(1, 1) * x1[f];
  }
}

SourceEstimate apply_demixing(const DemixingStack& w, const SpectralFrame& x) {
  SourceEstimate out = SourceEstimate::zeros(w.num_bins());
  apply_demixing(w, x, out);
  return out;
}

ComplexVector phi(std::span<const cd> y_p) {
  double energy = 0.0;
  for (const auto& v : y_p) energy += sq(v);
  const double inv = 1.0 / std::sqrt(energy + kPhiEpsilon);
  ComplexVector out(y_p.begin(), y_p.end());
  for (auto& v : out) v *= inv;
  return out;
}

namespace {

// In-place core shared by gradient_step and batch_iva; `scratch` holds the
// per-bin correlation accumulators.
void step_into(const DemixingStack& w, std::span<const SpectralFrame> frames, double eta, DemixingStack& out,
               std::vector<Matrix2c>& scratch, SourceEstimate& y, double max_condition) {
  const std::size_t bins = w.num_bins();
  scratch.assign(bins, Matrix2c::Zero());
  for (const auto& frame : frames) {
    apply_demixing(w, frame, y);
    std::array<double, kNumSources> inv_norm{};
    for (std::size_t p = 0; p < kNumSources; ++p) {
      double e = 0.0;
      for (const auto& v : y.y[p]) e += sq(v);
      inv_norm[p] = 1.0 / std::sqrt(e + kPhiEpsilon);
    }
    for (std::size_t f = 0; f < bins; ++f) {
      const cd a = y.y[0][f], b = y.y[1][f];
      const cd pa = a * inv_norm[0], pb = b * inv_norm[1];
      Matrix2c& c = scratch[f];
      c(0, 0) += pa * std::conj(a);
      c(0, 1) += pa * std::conj(b);
      c(1, 0) += pb * std::conj(a);
      c(1, 1) += pb * std::conj(b);
    }
  }
  const double inv_frames = 1.0 / static_cast<double>(frames.size());
  out.w.resize(bins);
  for (std::size_t f = 0; f < bins; ++f) {
    const Matrix2c grad = Matrix2c::Identity() - scratch[f] * inv_frames;
    out.w[f] = w.w[f] + eta * grad * w.w[f];
    if (!out.w[f].allFinite()) throw NumericalError("gradient_step produced non-finite entries", f);
    if (max_condition > 0.0) enforce_condition(out.w[f], max_condition);
  }
  out.frame_of_last_update = w.frame_of_last_update;
  out.update_count = w.update_count;
}

double mean_increment(const DemixingStack& a, const DemixingStack& b) {
  double delta = 0.0;
  for (std::size_t f = 0; f < a.num_bins(); ++f) delta += (b.w[f] - a.w[f]).norm();
  return delta / static_cast<double>(a.num_bins());
}

}  // namespace

DemixingStack gradient_step(const DemixingStack& w, std::span<const SpectralFrame> frames, double eta) {
  if (frames.empty()) throw PreconditionError("gradient_step: empty frame buffer");
  for (const auto& f : frames) check_frame(w, f);
  DemixingStack out;
  std::vector<Matrix2c> scratch;
  SourceEstimate y = SourceEstimate::zeros(w.num_bins());
  step_into(w, frames, eta, out, scratch, y, IvaConfig{}.max_condition);
  return out;
}

double iva_contrast(const DemixingStack& w, std::span<const SpectralFrame> frames) {
  if (frames.empty()) throw PreconditionError("iva_contrast: empty frame buffer");
  SourceEstimate y = SourceEstimate::zeros(w.num_bins());
  double norm_sum = 0.0;
  for (const auto& frame : frames) {
    apply_demixing(w, frame, y);
    for (std::size_t p = 0; p < kNumSources; ++p) {
      double e = 0.0;
      for (const auto& v : y.y[p]) e += sq(v);
      norm_sum += std::sqrt(e);
    }
  }
  double logdet = 0.0;
  for (const auto& m : w.w) logdet += std::log(std::abs(m.determinant()));
  return norm_sum / static_cast<double>(frames.size()) - logdet;
}

DemixingStack rescale_mdp(const DemixingStack& w) {
  DemixingStack out = w;
  for (std::size_t f = 0; f < w.num_bins(); ++f) {
    const Matrix2c& m = w.w[f];
    const cd det = m.determinant();
    if (!(std::abs(det) > 0.0) || !std::isfinite(std::abs(det)))
      throw NumericalError("rescale_mdp: singular demixing matrix", f);
    // diag(W^-1) = (W11, W00) / det
    const cd d0 = m(1, 1) / det;
    const cd d1 = m(0, 0) / det;
    out.w[f].row(0) = d0 * m.row(0);
    out.w[f].row(1) = d1 * m.row(1);
  }
  return out;
}

IvaResult batch_iva(std::span<const SpectralFrame> frames, const IvaConfig& cfg, const DemixingStack& w_init) {
  cfg.validate();
  if (frames.size() < 2) throw PreconditionError("batch_iva: need at least two buffered frames");
  for (const auto& f : frames) check_frame(w_init, f);
  if (!w_init.is_finite()) throw NumericalError("batch_iva: non-finite initial stack");

  const std::size_t bins = w_init.num_bins();
  SourceEstimate y = SourceEstimate::zeros(bins);

  IvaResult result;
  DemixingStack next;
  std::vector<Matrix2c> scratch;

  // A warm start that already sits at the fixed point is kept as is.
  step_into(w_init, frames, cfg.eta, next, scratch, y, cfg.max_condition);
  if (mean_increment(w_init, next) < cfg.tol) {
    result.iterations = 1;
    result.converged = true;
    result.stack = rescale_mdp(next);
    result.stack.frame_of_last_update = w_init.frame_of_last_update;
    result.stack.update_count = w_init.update_count + 1;
    return result;
  }

  // Scale the warm start per bin so each bin's mean output power equals F,
  // the power level of the update's fixed point.
  std::vector<double> power(bins, 0.0);
  for (const auto& frame : frames) {
    apply_demixing(w_init, frame, y);
    for (const auto& ch : y.y)
      for (std::size_t f = 0; f < bins; ++f) power[f] += sq(ch[f]);
  }
  DemixingStack current = w_init;
  for (std::size_t f = 0; f < bins; ++f) {
    const double p = power[f] / static_cast<double>(frames.size() * kNumSources);
    if (p > 0.0) current.w[f] *= std::sqrt(static_cast<double>(bins) / p);
  }
  const double start_norm = std::max(max_norm(current), 1e-300);

  for (int it = 0; it < cfg.max_iters; ++it) {
    step_into(current, frames, cfg.eta, next, scratch, y, cfg.max_condition);
    const double delta = mean_increment(current, next);
    std::swap(current, next);
    result.iterations = it + 1;
    if (max_norm(current) > cfg.divergence_ratio * start_norm)
      throw NumericalError("batch_iva diverged; use a smaller eta");
    if (delta < cfg.tol) {
      result.converged = true;
      break;
    }
  }
  result.stack = rescale_mdp(current);
  result.stack.frame_of_last_update = w_init.frame_of_last_update;
  result.stack.update_count = w_init.update_count + 1;
  return result;
}

std::size_t select_speech_channel(std::span<const SourceEstimate> y_frames, std::span<const bool> vad_flags) {
  if (y_frames.size() != vad_flags.size()) throw PreconditionError("select_speech_channel: flag count mismatch");
  std::array<double, kNumSources> active{}, inactive{};
  std::size_t n_active = 0, n_inactive = 0;
  for (std::size_t m = 0; m < y_frames.size(); ++m) {
    if (y_frames[m].y.size() != kNumSources) throw PreconditionError("select_speech_channel: expected 2 sources");
    for (std::size_t p = 0; p < kNumSources; ++p) {
      double e = 0.0;
      for (const auto& v : y_frames[m].y[p]) e += sq(v);
      (vad_flags[m] ? active : inactive)[p] += e;
    }
    (vad_flags[m] ? n_active : n_inactive) += 1;
  }
  if (n_active == 0) throw PreconditionError("select_speech_channel: no voice-active frames");
  std::array<double, kNumSources> score{};
  for (std::size_t p = 0; p < kNumSources; ++p) {
    if (n_inactive == 0) {
      score[p] = active[p];
    } else {
      const double a = active[p] / static_cast<double>(n_active);
      const double i = inactive[p] / static_cast<double>(n_inactive);
      score[p] = i > 0.0 ? a / i : std::numeric_limits<double>::infinity();
    }
  }
  return score[1] > score[0] ? 1 : 0;
}

std::string stack_to_json(const DemixingStack& w) {
  nlohmann::json j;
  j["num_bins"] = w.num_bins();
  j["frame_of_last_update"] = w.frame_of_last_update;
  j["update_count"] = w.update_count;
  auto& bins = j["w"] = nlohmann::json::array();
  for (const auto& m : w.w) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 2; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 2; ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
      rows.push_back(row);
    }
    bins.push_back(rows);
  }
  return j.dump();
}

DemixingStack stack_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("json", e.what());
  }
  if (!j.contains("w") || !j["w"].is_array()) throw DecodeError("w", "missing bin array");
  DemixingStack s;
  s.frame_of_last_update = j.value("frame_of_last_update", std::size_t{0});
  s.update_count = j.value("update_count", std::size_t{0});
  for (const auto& rows : j["w"]) {
    Matrix2c m;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        const auto& z = rows.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c));
        m(r, c) = {z.at(0).get<double>(), z.at(1).get<double>()};
      }
    s.w.push_back(m);
  }
  if (j.contains("num_bins") && j["num_bins"].get<std::size_t>() != s.w.size())
    throw DecodeError("num_bins", "does not match the bin array");
  return s;
}

}  // namespace bssgate
