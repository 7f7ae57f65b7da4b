#include "bssgate/audio_io.hpp"

#include <cstring>
#include <filesystem>
#include <numbers>

#include "bssgate/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace bssgate;
namespace fs = std::filesystem;

namespace {

AudioClip random_clip(std::size_t channels, std::size_t n, std::uint64_t seed, double amp = 0.5) {
  std::vector<std::vector<double>> ch;
  for (std::size_t c = 0; c < channels; ++c) {
    auto x = testsupport::gaussian(n, seed + c, amp / 3.0);
    for (auto& v : x) v = std::clamp(v, -amp, amp);
    ch.push_back(std::move(x));
  }
  return AudioClip(std::move(ch), kCanonicalRateHz);
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("bssgate_test_" + name); }

std::vector<double> tone(double freq, double rate, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * double(i) / rate);
  return x;
}

}  // namespace

TEST_SUITE("wav") {
  TEST_CASE("2-channel 16-bit file of 16000 frames reads back with its shape") {
    const auto clip = random_clip(2, 16000, 1);
    const auto path = temp_path("stereo.wav");
    write_wav(clip, path);
    const auto back = read_wav(path);
    CHECK(back.num_channels() == 2);
    CHECK(back.num_samples() == 16000);
    CHECK(back.sample_rate_hz() == 16000);
    CHECK(fs::file_size(path) == 44 + 16000 * 2 * 2);
    fs::remove(path);
  }

  TEST_CASE("16-bit round trip stays within one quantization step") {
    const auto clip = random_clip(2, 5000, 7, 0.99);
    const auto back = decode_wav(encode_wav(clip, WavFormat::kPcm16));
    double worst = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < clip.num_samples(); ++i)
        worst = std::max(worst, std::abs(clip.channel(c)[i] - back.channel(c)[i]));
    CHECK(worst <= std::ldexp(1.0, -15));
  }

  TEST_CASE("float32 round trip is exact for float-representable samples") {
    auto clip = random_clip(1, 1000, 3);
    for (auto& v : clip.channel(0)) v = static_cast<float>(v);
    const auto back = decode_wav(encode_wav(clip, WavFormat::kFloat32));
    for (std::size_t i = 0; i < clip.num_samples(); ++i) CHECK(back.channel(0)[i] == clip.channel(0)[i]);
  }

  TEST_CASE("stereo output is interleaved") {
    AudioClip clip({{0.5, 0.25}, {-0.5, -0.25}}, 16000);
    const auto bytes = encode_wav(clip, WavFormat::kPcm16);
    std::int16_t s[4];
    std::memcpy(s, bytes.data() + 44, sizeof(s));
    CHECK(s[0] == 16384);
    CHECK(s[1] == -16384);
    CHECK(s[2] == 8192);
    CHECK(s[3] == -8192);
  }

  TEST_CASE("out-of-range samples saturate and are counted") {
    AudioClip clip({{1.5, -2.0, 0.0, 1.0}}, 16000);
    WavWriteReport report;
    const auto back = decode_wav(encode_wav(clip, WavFormat::kPcm16, &report));
    CHECK(report.clipped_samples == 2);
    CHECK(back.channel(0)[0] == doctest::Approx(32767.0 / 32768.0));
    CHECK(back.channel(0)[1] == -1.0);
    CHECK(back.channel(0)[3] == doctest::Approx(32767.0 / 32768.0));
  }

  TEST_CASE("empty clip cannot be written") {
    CHECK_THROWS_AS(encode_wav(AudioClip{}, WavFormat::kPcm16), PreconditionError);
  }

  TEST_CASE("malformed headers name the offending field") {
    const auto good = encode_wav(random_clip(1, 100, 2), WavFormat::kPcm16);
    auto field_of = [](std::vector<std::uint8_t> bytes) -> std::string {
      try {
        decode_wav(bytes);
      } catch (const DecodeError& e) {
        return e.field();
      }
      return "";
    };
    CHECK(field_of({good.begin(), good.begin() + 10}) == "RIFF");
    auto bad = good;
    bad[8] = 'X';
    CHECK(field_of(bad) == "WAVE");
    bad = good;
    bad[20] = 2;  // ADPCM
    CHECK(field_of(bad) == "audio_format");
    bad = good;
    bad[22] = 0;
    CHECK(field_of(bad) == "num_channels");
    bad = good;
    std::memset(bad.data() + 24, 0, 4);
    CHECK(field_of(bad) == "sample_rate");
    // Truncated data chunk: no partial clip.
    CHECK(field_of({good.begin(), good.end() - 11}) == "data");
    CHECK(field_of({good.begin(), good.begin() + 36}) == "data");
  }

  TEST_CASE("unknown chunks before data are skipped") {
    auto bytes = encode_wav(random_clip(1, 50, 4), WavFormat::kPcm16);
    const std::uint8_t list[] = {'L', 'I', 'S', 'T', 4, 0, 0, 0, 'a', 'b', 'c', 'd'};
    bytes.insert(bytes.begin() + 36, std::begin(list), std::end(list));
    const std::uint32_t riff = static_cast<std::uint32_t>(bytes.size() - 8);
    std::memcpy(bytes.data() + 4, &riff, 4);
    CHECK(decode_wav(bytes).num_samples() == 50);
  }

  TEST_CASE("missing files raise an I/O error") {
    CHECK_THROWS_AS(read_wav("/nonexistent/dir/x.wav"), IoError);
  }
}

TEST_SUITE("stft") {
  TEST_CASE("standard configuration") {
    const auto cfg = StftConfig::standard();
    CHECK(cfg.frame_len == 320);
    CHECK(cfg.hop == 160);
    CHECK(cfg.fft_size == 512);
    CHECK(cfg.num_bins() == 257);
    CHECK(cola_deviation(cfg.window, cfg.hop) <= 1e-10);
    CHECK_NOTHROW(cfg.validate());
  }

  TEST_CASE("invalid configurations name their field") {
    auto cfg = StftConfig::standard();
    cfg.hop = 100;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = StftConfig::standard();
    cfg.fft_size = 256;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = StftConfig::standard();
    cfg.window.assign(320, 1.0);
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }

  TEST_CASE("frame count follows the framing arithmetic") {
    const auto cfg = StftConfig::standard();
    for (std::size_t n : {320u, 321u, 479u, 480u, 16000u, 48000u}) {
      const auto frames = stft_analyze(AudioClip::zeros(1, n, 16000), cfg);
      CHECK(frames.size() == (n - 320) / 160 + 1);
    }
    CHECK_THROWS_AS(stft_analyze(AudioClip::zeros(1, 319, 16000), cfg), PreconditionError);
    CHECK_THROWS_AS(stft_analyze(AudioClip::zeros(1, 1000, 8000), cfg), PreconditionError);
  }

  TEST_CASE("all-zero clip gives all-zero frames") {
    const auto frames = stft_analyze(AudioClip::zeros(2, 3200, 16000), StftConfig::standard());
    for (const auto& f : frames)
      for (const auto& ch : f.coeffs)
        for (const auto& v : ch) CHECK(v == std::complex<double>(0.0, 0.0));
  }

  TEST_CASE("bin-centre tone concentrates in its main lobe") {
    // A sqrt-Hann window over 320 samples, zero padded to 512, spreads a
    // bin-centre tone over its main lobe (about +-2.4 bins). 95% of the frame
    // energy must fall within +-3 bins of the tone's bin.
    const auto cfg = StftConfig::standard();
    for (std::size_t k : {10u, 40u, 100u, 200u}) {
      const auto clip = AudioClip::mono(tone(k * 16000.0 / 512.0, 16000.0, 3200), 16000);
      const auto frames = stft_analyze(clip, cfg);
      const auto& spec = frames[5].coeffs[0];
      double total = 0.0, lobe = 0.0;
      for (std::size_t b = 0; b < spec.size(); ++b) {
        const double e = std::norm(spec[b]);
        total += e;
        if (b + 3 >= k && b <= k + 3) lobe += e;
      }
      CHECK(lobe / total >= 0.95);
    }
  }

  TEST_CASE("Parseval: windowed frame energy equals scaled spectral energy") {
    const auto cfg = StftConfig::standard();
    const auto x = testsupport::gaussian(4000, 9);
    const auto frames = stft_analyze(AudioClip::mono(x, 16000), cfg);
    for (std::size_t m = 0; m < frames.size(); m += 5) {
      double time_energy = 0.0;
      for (std::size_t i = 0; i < cfg.frame_len; ++i) {
        const double v = x[m * cfg.hop + i] * cfg.window[i];
        time_energy += v * v;
      }
      const auto& s = frames[m].coeffs[0];
      double spec_energy = std::norm(s.front()) + std::norm(s.back());
      for (std::size_t b = 1; b + 1 < s.size(); ++b) spec_energy += 2.0 * std::norm(s[b]);
      spec_energy /= static_cast<double>(cfg.fft_size);
      CHECK(std::abs(spec_energy - time_energy) <= 1e-9 * time_energy);
    }
  }

  TEST_CASE("identity round trip reconstructs the interior for any length of at least three frames") {
    const auto cfg = StftConfig::standard();
    for (std::size_t n : {640u, 641u, 999u, 16000u, 48000u}) {
      const auto clip = random_clip(2, n, n);
      const auto frames = stft_analyze(clip, cfg);
      const auto out = istft_synthesize(frames, cfg);
      const auto range = fully_overlapped_interior(frames.size(), cfg);
      for (std::size_t c = 0; c < 2; ++c) {
        const auto a = clip.channel(c).subspan(range.begin, range.end - range.begin);
        const auto b = out.channel(c).subspan(range.begin, range.end - range.begin);
        CHECK(testsupport::rms_error(a, b) <= 1e-6 * testsupport::rms(a));
      }
    }
  }

  TEST_CASE("zero spectra synthesize to silence; empty input is rejected") {
    const auto cfg = StftConfig::standard();
    const auto frames = stft_analyze(AudioClip::zeros(1, 1600, 16000), cfg);
    const auto out = istft_synthesize(frames, cfg);
    CHECK(testsupport::energy(out.channel(0)) == 0.0);
    CHECK_THROWS_AS(istft_synthesize({}, cfg), PreconditionError);
  }

  TEST_CASE("analysis is bit-deterministic") {
    const auto clip = random_clip(2, 3000, 5);
    const auto a = stft_analyze(clip, StftConfig::standard());
    const auto b = stft_analyze(clip, StftConfig::standard());
    for (std::size_t m = 0; m < a.size(); ++m) CHECK(a[m].coeffs == b[m].coeffs);
  }

  TEST_CASE("streaming analyzer and synthesizer match the batch functions") {
    const auto cfg = StftConfig::standard();
    const auto clip = random_clip(2, 4000, 12);
    const auto batch = stft_analyze(clip, cfg);
    StftAnalyzer analyzer(cfg, 2);
    OverlapAddSynthesizer synth(cfg);
    auto frame = analyzer.make_frame();
    std::vector<double> out(batch.size() * cfg.hop + cfg.frame_len - cfg.hop);
    std::vector<SpectralFrame> mono;
    for (std::size_t m = 0; m < batch.size(); ++m) {
      const std::array<std::span<const double>, 2> views{clip.channel(0).subspan(m * cfg.hop, cfg.frame_len),
                                                         clip.channel(1).subspan(m * cfg.hop, cfg.frame_len)};
      analyzer.analyze(views, frame);
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t b = 0; b < cfg.num_bins(); ++b) CHECK(frame.coeffs[c][b] == batch[m].coeffs[c][b]);
      synth.push(frame.coeffs[0], std::span<double>(out).subspan(m * cfg.hop, cfg.hop));
      mono.push_back(SpectralFrame{{frame.coeffs[0]}, m});
    }
    synth.flush(std::span<double>(out).subspan(batch.size() * cfg.hop, cfg.frame_len - cfg.hop));
    const auto want = istft_synthesize(mono, cfg);
    REQUIRE(want.num_samples() == out.size());
    CHECK(testsupport::rms_error(out, want.channel(0)) < 1e-15);
  }
}

TEST_SUITE("resample") {
  TEST_CASE("1 kHz tone passes within 0.5 dB and lengths divide by three") {
    const auto in = AudioClip::mono(tone(1000.0, 48000.0, 48000, 0.5), 48000);
    const auto out = resample_3to1(in);
    CHECK(out.sample_rate_hz() == 16000);
    CHECK(out.num_samples() == 16000);
    const auto mid = out.channel(0).subspan(2000, 12000);
    const double gain_db = 20.0 * std::log10(testsupport::rms(mid) / (0.5 / std::sqrt(2.0)));
    CHECK(std::abs(gain_db) <= 0.5);
    // Zero phase: the output still lines up with a 16 kHz sine.
    const auto ref = tone(1000.0, 16000.0, 16000, 0.5);
    CHECK(testsupport::rms_error(mid, std::span<const double>(ref).subspan(2000, 12000)) < 0.01);
  }

  TEST_CASE("10 kHz tone is attenuated by at least 60 dB") {
    const auto in = AudioClip::mono(tone(10000.0, 48000.0, 48000), 48000);
    const auto out = resample_3to1(in);
    const auto mid = out.channel(0).subspan(2000, 12000);
    const double in_power = testsupport::energy(in.channel(0)) / 48000.0;
    const double out_power = testsupport::energy(mid) / 12000.0;
    CHECK(10.0 * std::log10(out_power / in_power) <= -60.0);
  }

  TEST_CASE("other rates are rejected") {
    CHECK_THROWS_AS(resample_3to1(AudioClip::zeros(1, 4410, 44100)), PreconditionError);
  }
}

TEST_SUITE("clip") {
  TEST_CASE("channels must share length and the rate must be positive") {
    CHECK_THROWS_AS(AudioClip({{0.0, 0.0}, {0.0}}, 16000), PreconditionError);
    CHECK_THROWS_AS(AudioClip({{0.0}}, 0), PreconditionError);
  }
}
