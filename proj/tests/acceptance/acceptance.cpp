// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance               run all criteria
//   acceptance --criterion 4 run one
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bssgate/bench.hpp"
#include "bssgate/dataset.hpp"
#include "bssgate/doa.hpp"
#include "bssgate/errors.hpp"
#include "bssgate/eval.hpp"
#include "bssgate/gate_pipeline.hpp"
#include "bssgate/iva.hpp"
#include "bssgate/random.hpp"
#include "bssgate/room_sim.hpp"

using namespace bssgate;
using cd = std::complex<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const BenchResult& default_bench() {
  static const BenchResult r = run_bench(BenchOptions{});
  return r;
}

Outcome complexity() {
  const auto& r = default_bench();
  const std::size_t gated = r.subject.updates_triggered - r.subject.warmup_updates;
  Outcome o;
  o.pass = gated == 4 && r.subject.warmup_updates == 1 && r.baseline.accounted_updates == 150 && r.ratio >= 37.0 &&
           r.wall_s < 30.0;
  o.detail = fmt("gated triggers %zu (+%zu warm-up), per-frame accounted %zu, ratio %.2f, runtime %.2f s", gated,
                 r.subject.warmup_updates, r.baseline.accounted_updates, r.ratio, r.wall_s);
  return o;
}

Outcome realtime() {
  const auto& r = default_bench();
  Outcome o;
  o.pass = r.subject.steady_p95_frame_ms < 20.0 && r.subject.steady_max_frame_ms < 20.0;
  o.detail = fmt("steady p95 %.4f ms, steady max %.4f ms (all frames max %.4f ms)", r.subject.steady_p95_frame_ms,
                 r.subject.steady_max_frame_ms, r.subject.max_frame_ms);
  return o;
}

// Both 5-label halves carry some label at least 4 times and the labels differ.
bool brute_force_gate(const std::vector<int>& h) {
  auto major = [&](std::size_t begin) {
    std::map<int, int> count;
    for (std::size_t i = begin; i < begin + 5; ++i) ++count[h[i]];
    for (auto [label, c] : count)
      if (c >= 4) return label;
    return -1;
  };
  const int a = major(0), b = major(5);
  return a >= 0 && b >= 0 && a != b;
}

Outcome gate_table() {
  std::size_t mismatches = 0, fired = 0, cases = 0;
  for (auto [t1, t2] : {std::pair{2, 4}, std::pair{0, 6}, std::pair{3, 1}}) {
    for (unsigned bits = 0; bits < 1024; ++bits) {
      std::vector<int> labels(10);
      DoaHistory h;
      for (int i = 0; i < 10; ++i) {
        labels[std::size_t(i)] = (bits >> i) & 1u ? t2 : t1;
        h.push(labels[std::size_t(i)]);
      }
      const bool expect = brute_force_gate(labels);
      const auto got = should_update(h);
      mismatches += got.update != expect;
      fired += expect;
      ++cases;
    }
  }
  return {mismatches == 0, fmt("%zu histories, %zu firing, %zu mismatches", cases, fired, mismatches)};
}

Outcome reconstruction() {
  const auto cfg = StftConfig::standard();
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    std::mt19937_64 rng(derive_seed(4, "stft-clip", k));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> ch(2, std::vector<double>(48000));
    for (auto& c : ch)
      for (auto& v : c) v = u(rng);
    const AudioClip clip(ch, kCanonicalRateHz);
    const auto frames = stft_analyze(clip, cfg);
    const auto id = DemixingStack::identity(cfg.num_bins());
    std::vector<SpectralFrame> out(frames.size());
    for (std::size_t m = 0; m < frames.size(); ++m) {
      const auto y = apply_demixing(id, frames[m]);
      out[m].coeffs = y.y;
      out[m].frame_index = frames[m].frame_index;
    }
    const auto rec = istft_synthesize(out, cfg);
    const auto range = fully_overlapped_interior(frames.size(), cfg);
    for (std::size_t c = 0; c < 2; ++c) {
      double err = 0.0, ref = 0.0;
      for (std::size_t n = range.begin; n < range.end; ++n) {
        const double d = rec.channel(c)[n] - ch[c][n];
        err += d * d;
        ref += ch[c][n] * ch[c][n];
      }
      worst = std::max(worst, std::sqrt(err / ref));
    }
  }
  return {worst <= 1e-6, fmt("worst interior relative RMS error %.3e over 10 clips", worst)};
}

// ||off(normalize(W A))|| / ||diag(...)|| in the Frobenius norm of the whole
// stack. Output rows are put in the permutation most bins agree on and each
// row is divided by its diagonal entry.
double separation_ratio(const DemixingStack& w, const Matrix2c& a) {
  std::size_t straight = 0;
  std::vector<Matrix2c> g(w.num_bins());
  for (std::size_t f = 0; f < w.num_bins(); ++f) {
    g[f] = w.w[f] * a;
    straight += g[f].diagonal().cwiseAbs2().sum() >= std::norm(g[f](0, 1)) + std::norm(g[f](1, 0));
  }
  const bool swap = 2 * straight < w.num_bins();
  double off = 0.0, diag = 0.0;
  for (auto m : g) {
    if (swap) m.row(0).swap(m.row(1));
    for (int r = 0; r < 2; ++r) {
      if (std::abs(m(r, r)) == 0.0) return INFINITY;
      m.row(r) /= m(r, r);
    }
    off += std::norm(m(0, 1)) + std::norm(m(1, 0));
    diag += 2.0;
  }
  return std::sqrt(off / diag);
}

Outcome iva_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kBins = 257;
  int good = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    std::mt19937_64 rng(derive_seed(5, "iva-mixture", k));
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    std::exponential_distribution<double> e(1.0);
    Matrix2c a;
    for (int i = 0; i < 4; ++i) a(i / 2, i % 2) = cd(g(rng), g(rng));
    std::vector<SpectralFrame> frames(200);
    for (auto& x : frames) {
      x.coeffs.assign(2, ComplexVector(kBins));
      const double s0 = std::sqrt(e(rng)), s1 = std::sqrt(e(rng));
      for (std::size_t f = 0; f < kBins; ++f) {
        const Eigen::Vector2cd s(cd(g(rng), g(rng)) * s0, cd(g(rng), g(rng)) * s1);
        const Eigen::Vector2cd mixed = a * s;
        x.coeffs[0][f] = mixed(0);
        x.coeffs[1][f] = mixed(1);
      }
    }
    const auto r = batch_iva(frames, IvaConfig{}, DemixingStack::identity(kBins));
    const double ratio = separation_ratio(r.stack, a);
    good += ratio <= 0.1;
    worst_ratio = std::max(worst_ratio, ratio);
  }
  const double wall = seconds_since(t0);
  return {good >= 18 && wall < 60.0,
          fmt("%d/20 mixtures with ratio <= 0.1 (worst %.3g), runtime %.1f s", good, worst_ratio, wall)};
}

Outcome separation_direction() {
  double noisy = 0.0, gated = 0.0, per_frame = 0.0;
  const int clips = 8;
  for (int k = 0; k < clips; ++k) {
    SceneConfig scene;
    scene.t60 = 0.2;
    scene.snr_db = 5.0;
    scene.noise_kind = NoiseKind::kBabble;
    scene.seed = 100 + std::uint64_t(k);
    scene.source_angle_deg = 30.0 * (k % 7);
    const auto mix = simulate_scene(scene, 6.0);
    const auto ref = mix.clean_speech_at_mics.channel(0);
    noisy += sdr(mix.mixture.channel(0), ref);
    for (auto mode : {PipelineMode::kGated, PipelineMode::kPerFrame}) {
      PipelineConfig pc;
      pc.mode = mode;
      pc.doa_source = DoaSource::kGroundTruth;
      const std::vector<int> labels(pc.stft.num_frames(ref.size()), angle_to_class(scene.source_angle_deg));
      const auto r = run_stream(mix.mixture, pc, nullptr, labels);
      (mode == PipelineMode::kGated ? gated : per_frame) += sdr(r.separated.channel(0), ref);
    }
  }
  noisy /= clips;
  gated /= clips;
  per_frame /= clips;
  const bool gain = gated >= noisy + 3.0, par = gated >= per_frame - 1.0;
  return {gain && par, fmt("mean SDR noisy %.2f, gated %.2f, per-frame %.2f dB over %d clips (gain %s, parity %s)",
                           noisy, gated, per_frame, clips, gain ? "ok" : "short", par ? "ok" : "short")};
}

Outcome doa_vs_gcc() {
  const std::vector<double> angles{0, 30, 60, 90, 120, 150, 180}, snrs{-5, 0, 5};
  SceneConfig tmpl;
  tmpl.t60 = 0.2;
  tmpl.seed = 11;
  const auto train_corpus = synthetic_corpus(10, 2.0, 1);
  const auto train = build_doa_dataset(angles, snrs, train_corpus, tmpl);
  SceneConfig held = tmpl;
  held.seed = 999;
  const auto test_corpus = synthetic_corpus(3, 2.0, 2);
  const auto test = build_doa_dataset(angles, snrs, test_corpus, held);
  TrainConfig tc;
  tc.epochs = 300;
  tc.seed = 3;
  const auto rows = train.all_rows();
  const auto model = fnn_train(rows, tc).model;
  std::size_t fnn = 0, gcc = 0, n = 0;
  for (const auto& g : test.groups)
    for (std::size_t i = 0; i < g.rows.size(); ++i) {
      fnn += fnn_forward(model, g.rows[i].feature).label == g.label;
      gcc += gcc_class(g.correlations[i], kCanonicalRateHz, tmpl.mic_spacing) == g.label;
      ++n;
    }
  const double af = double(fnn) / double(n), ag = double(gcc) / double(n);
  return {af > ag, fmt("held-out frames %zu: FNN %.3f, GCC %.3f", n, af, ag)};
}

Outcome trainer() {
  std::mt19937_64 rng(derive_seed(8, "gradient-check"));
  std::normal_distribution<double> g(0.0, 0.5);
  std::uniform_int_distribution<int> label(0, kNumClasses - 1);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    FnnModel m;
    m.use_bias = k % 2 == 1;
    m.w1 = FnnModel::HiddenWeights::NullaryExpr([&] { return g(rng); });
    m.w2 = FnnModel::OutputWeights::NullaryExpr([&] { return g(rng); });
    if (m.use_bias) {
      m.b1 = decltype(m.b1)::NullaryExpr([&] { return g(rng); });
      m.b2 = decltype(m.b2)::NullaryExpr([&] { return g(rng); });
    }
    DoaFeature x;
    double norm = 0.0;
    for (auto& v : x.u) norm += (v = g(rng)) * v;
    for (auto& v : x.u) v /= std::sqrt(norm);
    worst = std::max(worst, gradient_check(m, x, label(rng)));
  }

  std::vector<LabeledFeature> data;
  for (int i = 0; i < 700; ++i) {
    LabeledFeature r;
    r.label = i % kNumClasses;
    for (auto& v : r.feature.u) v = g(rng);
    r.feature.u[std::size_t(2 * r.label)] += 3.0;
    data.push_back(r);
  }
  TrainConfig tc;
  tc.epochs = 20;
  tc.seed = 42;
  const auto h1 = fnn_train(data, tc).model.weight_hash();
  const auto h2 = fnn_train(data, tc).model.weight_hash();
  return {worst <= 1e-4 && h1 == h2,
          fmt("max relative gradient error %.3e over 100 pairs; weight hashes %s", worst, h1 == h2 ? "identical" : "differ")};
}

Outcome metrics() {
  std::mt19937_64 rng(derive_seed(9, "metric-sanity"));
  std::normal_distribution<double> g;
  std::vector<double> ref(16000);
  double y = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = y = 0.9 * y + g(rng) * (0.6 + 0.4 * std::sin(double(i) * 0.002));
  const double cap = sdr(ref, ref);

  // noise orthogonal to every delayed copy the projection can use
  const long n = long(ref.size()), taps = long(kSdrDistortionTaps);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, 2 * taps + 1);
  for (long d = -taps; d <= taps; ++d)
    for (long i = 0; i < n; ++i)
      if (i - d >= 0 && i - d < n) a(i, d + taps) = ref[std::size_t(i - d)];
  Eigen::VectorXd noise(n);
  for (auto& v : noise) v = g(rng);
  noise -= a * a.colPivHouseholderQr().solve(noise);
  const Eigen::Map<const Eigen::VectorXd> r(ref.data(), n);
  noise *= r.norm() / noise.norm();
  std::vector<double> est(ref.size());
  for (long i = 0; i < n; ++i) est[std::size_t(i)] = ref[std::size_t(i)] + noise(i);
  const double zero = sdr(est, ref);

  double spread = 0.0;
  for (double k : {0.01, 0.5, 3.0, 100.0}) {
    auto scaled = est;
    for (auto& v : scaled) v *= k;
    spread = std::max(spread, std::abs(sdr(scaled, ref) - zero));
  }
  const bool pass = cap == kSdrCapDb && std::abs(zero) <= 0.1 && spread <= 1e-6;
  return {pass, fmt("sdr(ref, ref) %.1f dB, equal-power orthogonal noise %.4f dB, gain spread %.2e dB", cap, zero, spread)};
}

Outcome suppression() {
  std::mt19937_64 rng(derive_seed(10, "suppression"));
  std::uniform_int_distribution<int> segments(1, 4), label(0, kNumClasses - 1), kind(0, 2);
  std::uniform_real_distribution<double> seg_s(0.8, 2.5), snr(-5.0, 20.0);
  const double t60s[] = {0.0, 0.1, 0.2, 0.3};
  std::size_t violations = 0, errors = 0;
  std::size_t gated_total = 0, per_frame_total = 0;
  for (int k = 0; k < 50; ++k) {
    try {
      SceneConfig scene;
      scene.seed = rng();
      scene.t60 = t60s[k % 4];
      scene.snr_db = snr(rng);
      scene.noise_kind = static_cast<NoiseKind>(kind(rng));
      std::vector<double> angles(std::size_t(segments(rng)));
      for (auto& v : angles) v = class_to_angle(label(rng));
      const auto sc = simulate_moving_source(scene, angles, seg_s(rng));
      std::size_t counts[2];
      int i = 0;
      for (auto mode : {PipelineMode::kGated, PipelineMode::kPerFrame}) {
        PipelineConfig pc;
        pc.mode = mode;
        pc.doa_source = DoaSource::kGroundTruth;
        pc.execution = k % 2 ? UpdateExecution::kBackground : UpdateExecution::kSynchronous;
        const auto labels = truth_frame_labels(sc, pc.stft);
        counts[i++] = run_stream(sc.mixture.mixture, pc, nullptr, labels).stats.updates_triggered;
      }
      violations += counts[0] > counts[1];
      gated_total += counts[0];
      per_frame_total += counts[1];
    } catch (const std::exception& e) {
      std::fprintf(stderr, "scenario %d: %s\n", k, e.what());
      ++errors;
    }
  }
  return {violations == 0 && errors == 0,
          fmt("50 scenarios: %zu violations, %zu exceptions; updates gated %zu vs per-frame %zu", violations, errors,
              gated_total, per_frame_total)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bssgate acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"complexity reproduction", complexity},
      {"real-time budget", realtime},
      {"gate truth table", gate_table},
      {"STFT perfect reconstruction", reconstruction},
      {"IVA oracle separation", iva_oracle},
      {"separation direction", separation_direction},
      {"DOA classifier vs GCC", doa_vs_gcc},
      {"trainer correctness", trainer},
      {"metric sanity", metrics},
      {"suppression invariant", suppression},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && int(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
