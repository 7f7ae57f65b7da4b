#include "bssgate/doa.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include "bssgate/dataset.hpp"
#include "bssgate/errors.hpp"
#include "bssgate/fft.hpp"
#include "bssgate/room_sim.hpp"
#include "bssgate/signals.hpp"
#include "bssgate/vad.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bssgate;
namespace fs = std::filesystem;

namespace {

CrossCorrelation make_cc(std::vector<double> values) {
  CrossCorrelation cc;
  cc.max_lag = static_cast<int>(values.size() / 2);
  cc.values = std::move(values);
  return cc;
}

FnnModel random_model(std::uint64_t seed, double scale = 0.5, bool bias = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  FnnModel m;
  for (int i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = g(rng);
  for (int i = 0; i < m.w2.size(); ++i) m.w2.data()[i] = g(rng);
  m.use_bias = bias;
  if (bias) {
    for (int i = 0; i < m.b1.size(); ++i) m.b1[i] = g(rng);
    for (int i = 0; i < m.b2.size(); ++i) m.b2[i] = g(rng);
  }
  return m;
}

DoaFeature random_feature(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DoaFeature f;
  for (auto& v : f.u) v = u(rng);
  f.u[static_cast<std::size_t>(seed % kFeatureDim)] = 1.0;
  return f;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("bssgate_doa_" + name); }

}  // namespace

TEST_SUITE("cross correlation") {
  TEST_CASE("lag bound for the reference geometry") {
    CHECK(max_valid_lag(0.13, 16000) == 6);
    CHECK(max_valid_lag(0.05, 16000) == 2);
  }

  TEST_CASE("values match a brute-force biased estimate") {
    const auto a = testsupport::gaussian(320, 1);
    const auto b = testsupport::gaussian(320, 2);
    const auto cc = cross_correlate(a, b, 6);
    REQUIRE(cc.values.size() == 13);
    for (int lag = -6; lag <= 6; ++lag) {
      double want = 0.0;
      for (int n = 0; n < 320; ++n)
        if (n + lag >= 0 && n + lag < 320) want += a[std::size_t(n)] * b[std::size_t(n + lag)];
      CHECK(cc.at(lag) == doctest::Approx(want / 320.0).epsilon(1e-12));
    }
    CrossCorrelation into;
    cross_correlate_into(a, b, 6, into);
    CHECK(into.values == cc.values);
  }

  TEST_CASE("identical channels peak at zero lag; a 3-sample delay peaks at +3") {
    const auto x = testsupport::gaussian(400, 3);
    CHECK(peak_lag(cross_correlate(std::span(x).subspan(10, 320), std::span(x).subspan(10, 320))) == 0);
    // x2(n) = x1(n - 3)
    CHECK(peak_lag(cross_correlate(std::span(x).subspan(10, 320), std::span(x).subspan(7, 320))) == 3);
    CHECK(peak_lag(cross_correlate(std::span(x).subspan(10, 320), std::span(x).subspan(7, 320),
                                   kMaxLag, CorrelationWeighting::kPhat)) == 3);
  }

  TEST_CASE("uncorrelated white channels stay below 0.3 normalized in at least 99% of 1000 trials") {
    int within = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto a = testsupport::gaussian(320, 10000 + 2 * trial);
      const auto b = testsupport::gaussian(320, 10001 + 2 * trial);
      const auto cc = cross_correlate(a, b);
      const double norm = std::sqrt(testsupport::energy(a) * testsupport::energy(b)) / 320.0;
      double peak = 0.0;
      for (double v : cc.values) peak = std::max(peak, std::abs(v) / norm);
      within += peak <= 0.3;
    }
    CHECK(within >= 990);
  }

  TEST_CASE("length problems are rejected") {
    const std::vector<double> a(320), b(319), c(12);
    CHECK_THROWS_AS(cross_correlate(a, b), PreconditionError);
    CHECK_THROWS_AS(cross_correlate(c, c), PreconditionError);
  }
}

TEST_SUITE("gcc chain") {
  TEST_CASE("tdoa from the correlation peak") {
    std::vector<double> v(13, 0.0);
    v[6] = 1.0;
    CHECK(estimate_tdoa_gcc(make_cc(v), 16000) == 0.0);
    v.assign(13, 0.0);
    v[12] = 1.0;
    CHECK(estimate_tdoa_gcc(make_cc(v), 16000) == doctest::Approx(3.75e-4));
    v.assign(13, 0.0);
    v[4] = v[8] = 1.0;  // lags -2 and +2
    CHECK(peak_lag(make_cc(v)) == 2);
    v.assign(13, 0.0);
    v[5] = v[9] = 1.0;  // -1 beats +3 on |lag|
    CHECK(peak_lag(make_cc(v)) == -1);
  }

  TEST_CASE("tdoa to angle") {
    const double d = 0.13;
    CHECK(tdoa_to_angle(0.0, d) == doctest::Approx(90.0));
    CHECK(tdoa_to_angle(d / kSpeedOfSound, d) == doctest::Approx(0.0));
    CHECK(tdoa_to_angle(-d / kSpeedOfSound, d) == doctest::Approx(180.0));
    CHECK(tdoa_to_angle(1.0, d) == 0.0);
    CHECK(tdoa_to_angle(-1.0, d) == 180.0);
  }

  TEST_CASE("angle to class snaps to the 30 degree grid") {
    CHECK(angle_to_class(90.0) == 3);
    CHECK(angle_to_class(0.0) == 0);
    CHECK(angle_to_class(180.0) == 6);
    CHECK(angle_to_class(44.0) == 1);
    CHECK(angle_to_class(46.0) == 2);
    CHECK(angle_to_class(179.0) == 6);
    CHECK(class_to_angle(3) == 90.0);
  }

  TEST_CASE("anechoic grid-angle frames land within 15 degrees on at least 95% of frames") {
    const auto speech = AudioClip::mono(synth_speech(2.0, 21), 16000);
    for (int c = 0; c < kNumClasses; ++c) {
      SceneConfig cfg;
      cfg.source_angle_deg = class_to_angle(c);
      const Rir rir = simulate_rir(cfg, cfg.source_position());
      const auto x1 = fft_convolve(speech.channel(0), rir.taps[0]);
      const auto x2 = fft_convolve(speech.channel(0), rir.taps[1]);
      const double floor = 1e-3 * testsupport::energy(x1) / double(x1.size()) * 320.0;
      int frames = 0, good = 0;
      for (std::size_t s = 0; s + 320 <= speech.num_samples(); s += 160) {
        const auto f1 = std::span(x1).subspan(s, 320);
        if (testsupport::energy(f1) < floor) continue;
        const auto cc = cross_correlate(f1, std::span(x2).subspan(s, 320));
        const double angle = tdoa_to_angle(estimate_tdoa_gcc(cc, 16000), 0.13);
        ++frames;
        good += std::abs(angle - cfg.source_angle_deg) <= 15.0;
      }
      REQUIRE(frames > 20);
      CHECK(good >= 0.95 * frames);
    }
  }
}

TEST_SUITE("feature") {
  TEST_CASE("one-hot centre peak and absolute max normalization") {
    std::vector<double> v(13, 0.0);
    v[6] = 5.0;
    const auto f = extract_feature(make_cc(v));
    for (int i = 0; i < 13; ++i) CHECK(f.u[std::size_t(i)] == (i == 6 ? 1.0 : 0.0));
    v.assign(13, 0.0);
    v[0] = -2.0;
    v[1] = 4.0;
    const auto g = extract_feature(make_cc(v));
    CHECK(g.u[0] == 0.5);
    CHECK(g.u[1] == 1.0);
  }

  TEST_CASE("all-zero correlation is degenerate") {
    const auto f = extract_feature(make_cc(std::vector<double>(13, 0.0)));
    CHECK(f.is_degenerate());
    for (double v : f.u) CHECK(v == 0.0);
  }

  TEST_CASE("scale invariance, nonnegativity and unit maximum over random inputs") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> v(13);
      for (auto& x : v) x = g(rng);
      const auto f = extract_feature(make_cc(v));
      const double alpha = std::exp(g(rng) * 3.0);
      auto scaled = v;
      for (auto& x : scaled) x *= alpha;
      const auto h = extract_feature(make_cc(scaled));
      double mx = 0.0;
      for (std::size_t i = 0; i < 13; ++i) {
        CHECK(f.u[i] >= 0.0);
        CHECK(h.u[i] == doctest::Approx(f.u[i]).epsilon(1e-14));
        mx = std::max(mx, f.u[i]);
      }
      CHECK(mx == 1.0);
      CHECK_FALSE(f.is_degenerate());
    }
  }

  TEST_CASE("wrong lag count is rejected") {
    CHECK_THROWS_AS(extract_feature(make_cc(std::vector<double>(11, 1.0))), PreconditionError);
  }
}

TEST_SUITE("fnn") {
  TEST_CASE("zero weights give the uniform distribution") {
    const auto out = fnn_forward(FnnModel{}, random_feature(1));
    for (double p : out.probabilities) CHECK(p == doctest::Approx(1.0 / 7.0));
    CHECK(out.label == 0);
  }

  TEST_CASE("outputs form a probability vector for any input") {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto out = fnn_forward(random_model(s, 3.0), random_feature(s + 1000));
      double sum = 0.0;
      for (double p : out.probabilities) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      const auto it = std::max_element(out.probabilities.begin(), out.probabilities.end());
      CHECK(out.label == int(it - out.probabilities.begin()));
    }
  }

  TEST_CASE("ties go to the lower class index") {
    FnnModel m;
    m.w1.setZero();
    m.w1(0, 6) = 1.0;
    m.w2.setZero();
    m.w2(2, 0) = 1.0;
    m.w2(5, 0) = 1.0;
    DoaFeature f;
    f.u[6] = 1.0;
    CHECK(fnn_forward(m, f).label == 2);
  }

  TEST_CASE("non-finite weights are rejected") {
    FnnModel m;
    m.w2(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(m.is_finite());
    CHECK_THROWS_AS(fnn_forward(m, random_feature(2)), NumericalError);
  }

  TEST_CASE("analytic gradient matches an independent finite-difference oracle") {
    const auto m = random_model(7, 0.8, true);
    const auto f = random_feature(8);
    FnnGradients grad;
    loss_gradient(m, f, 4, grad);
    auto numeric = [&](auto perturb) {
      FnnModel p = m, q = m;
      perturb(p, 1e-6);
      perturb(q, -1e-6);
      return (cross_entropy_loss(p, f, 4) - cross_entropy_loss(q, f, 4)) / 2e-6;
    };
    // central differences are good to about 1e-9 absolute at this step
    auto close = [](double a, double n) { return std::abs(a - n) <= 1e-8 + 1e-6 * std::abs(n); };
    for (int r = 0; r < kHiddenUnits; ++r)
      for (int c = 0; c < kFeatureDim; ++c)
        CHECK(close(grad.w1(r, c), numeric([&](FnnModel& x, double h) { x.w1(r, c) += h; })));
    for (int r = 0; r < kNumClasses; ++r)
      for (int c = 0; c < kHiddenUnits; ++c)
        CHECK(close(grad.w2(r, c), numeric([&](FnnModel& x, double h) { x.w2(r, c) += h; })));
    for (int r = 0; r < kHiddenUnits; ++r) CHECK(close(grad.b1(r), numeric([&](FnnModel& x, double h) { x.b1(r) += h; })));
    for (int r = 0; r < kNumClasses; ++r) CHECK(close(grad.b2(r), numeric([&](FnnModel& x, double h) { x.b2(r) += h; })));
  }

  TEST_CASE("gradient_check stays within 1e-4 on random small models") {
    for (std::uint64_t s = 0; s < 30; ++s) CHECK(gradient_check(random_model(s, 0.3), random_feature(s), int(s % 7)) <= 1e-4);
  }

  TEST_CASE("zero model has a zero output-layer gradient") {
    FnnGradients grad;
    loss_gradient(FnnModel{}, random_feature(3), 2, grad);
    CHECK(grad.w2.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gradient_check(FnnModel{}, random_feature(3), 2) <= 1e-4);
  }

  TEST_CASE("all-positive first layer with a positive feature has no dead units") {
    auto m = random_model(11, 0.5);
    m.w1 = m.w1.cwiseAbs();
    const auto f = random_feature(12);
    CHECK((m.w1 * Eigen::Map<const Eigen::Matrix<double, kFeatureDim, 1>>(f.u.data())).minCoeff() > 0.0);
    CHECK(gradient_check(m, f, 5) <= 1e-4);
  }
}

TEST_SUITE("training") {
  std::vector<LabeledFeature> toy_set() {
    std::vector<LabeledFeature> rows;
    for (int copy = 0; copy < 20; ++copy)
      for (int c = 0; c < kNumClasses; ++c) {
        LabeledFeature r;
        r.feature.u[std::size_t(c * 2)] = 1.0;
        r.label = c;
        rows.push_back(r);
      }
    return rows;
  }

  TEST_CASE("one-hot toy set reaches full training accuracy within 500 epochs") {
    const auto rows = toy_set();
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.validation_fraction = 0.0;
    cfg.seed = 1;
    const auto result = fnn_train(rows, cfg);
    CHECK(result.train_accuracy == 1.0);
    CHECK(result.curve.size() == 500);
    CHECK(classification_accuracy(result.model, rows) == 1.0);
  }

  TEST_CASE("fixed seed gives bit-identical models; another seed differs") {
    const auto rows = toy_set();
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 9;
    const auto a = fnn_train(rows, cfg);
    const auto b = fnn_train(rows, cfg);
    CHECK(a.model.weight_hash() == b.model.weight_hash());
    CHECK(a.model.w1 == b.model.w1);
    cfg.seed = 10;
    CHECK(fnn_train(rows, cfg).model.weight_hash() != a.model.weight_hash());
  }

  TEST_CASE("loss decreases over training") {
    const auto rows = toy_set();
    TrainConfig cfg;
    cfg.epochs = 50;
    const auto r = fnn_train(rows, cfg);
    CHECK(r.curve.back().loss < r.curve.front().loss);
  }

  TEST_CASE("bad labels and empty sets are rejected before training") {
    auto rows = toy_set();
    rows[17].label = 7;
    try {
      fnn_train(rows, TrainConfig{});
      FAIL("expected an error");
    } catch (const PreconditionError& e) {
      CHECK(std::string(e.what()).find("row 18") != std::string::npos);
    }
    CHECK_THROWS_AS(fnn_train({}, TrainConfig{}), PreconditionError);
  }

  TEST_CASE("model trained on anechoic data labels a held-out 90 degree source as class 3 on 95% of voice frames") {
    const std::vector<double> angles{0, 30, 60, 90, 120, 150, 180};
    const std::vector<double> snrs{30.0};
    SceneConfig tmpl;
    tmpl.seed = 5;
    const auto corpus = synthetic_corpus(2, 2.0, 31);
    const auto data = build_doa_dataset(angles, snrs, corpus, tmpl);
    TrainConfig cfg;
    cfg.epochs = 150;
    cfg.seed = 2;
    const auto model = fnn_train(data.all_rows(), cfg).model;

    const std::vector<double> test_angle{90.0};
    tmpl.seed = 77;
    const auto held_out = build_doa_dataset(test_angle, snrs, synthetic_corpus(1, 3.0, 99), tmpl);
    // voice frames that carry speech; VAD hangover rows hold noise only
    const auto& group = held_out.groups.front();
    std::size_t hits = 0, frames = 0;
    for (std::size_t k = 0; k < group.rows.size(); ++k) {
      if (group.local_snr_db[k] < 0.0) continue;
      ++frames;
      hits += fnn_forward(model, group.rows[k].feature).label == 3;
    }
    REQUIRE(frames > 50);
    CHECK(double(hits) >= 0.95 * double(frames));
  }
}

TEST_SUITE("serialization") {
  TEST_CASE("model JSON round trip keeps weights and hash") {
    auto m = random_model(3, 1.0, true);
    m.config_hash = "abc";
    const auto back = model_from_json(model_to_json(m));
    CHECK(back.w1 == m.w1);
    CHECK(back.w2 == m.w2);
    CHECK(back.b1 == m.b1);
    CHECK(back.use_bias);
    CHECK(back.weight_hash() == m.weight_hash());
    const auto path = temp_path("model.json");
    save_model(m, path);
    CHECK(load_model(path).weight_hash() == m.weight_hash());
    fs::remove(path);
  }

  TEST_CASE("corrupt model files name the field") {
    auto field_of = [](const std::string& text) -> std::string {
      try {
        model_from_json(text);
      } catch (const DecodeError& e) {
        return e.field();
      }
      return "";
    };
    CHECK(field_of("{not json") == "json");
    CHECK(field_of(R"({"format_version": "other"})") == "format_version");
    const std::string good = model_to_json(random_model(4));
    auto replace = [&](const std::string& from, const std::string& to) {
      std::string t = good;
      t.replace(t.find(from), from.size(), to);
      return t;
    };
    CHECK(field_of(replace("\"w2\"", "\"w2_missing\"")) == "w2");
    CHECK(field_of(replace("\"w1_shape\": [", "\"w1_shape\": [9, ")) == "w1_shape");
    CHECK(field_of(good).empty());
    CHECK_THROWS_AS(load_model(temp_path("absent.json")), IoError);
  }

  TEST_CASE("feature CSV round trip and malformed rows listed") {
    std::vector<LabeledFeature> rows(3);
    for (int i = 0; i < 3; ++i) {
      rows[std::size_t(i)].feature = random_feature(std::uint64_t(i));
      rows[std::size_t(i)].label = i + 2;
    }
    const auto path = temp_path("features.csv");
    write_feature_csv(rows, path);
    const auto back = read_feature_csv(path);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[i].label == rows[i].label);
      CHECK(back[i].feature.u == rows[i].feature.u);
    }
    {
      std::ofstream out(path, std::ios::app);
      out << "1,2,3\n";
      out << "0,0,0,0,0,0,1,0,0,0,0,0,0,3\n";
      out << "0,0,0,0,0,0,1,0,0,0,0,0,0,9\n";
    }
    try {
      read_feature_csv(path);
      FAIL("expected a decode error");
    } catch (const DecodeError& e) {
      CHECK(e.field() == "rows");
      CHECK(std::string(e.what()).find(": 4,6") != std::string::npos);
    }
    fs::remove(path);
  }
}
