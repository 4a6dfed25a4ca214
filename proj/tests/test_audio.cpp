#include <catch_amalgamated.hpp>

#include <fstream>

#include "pamcurator/audio/decode.hpp"
#include "pamcurator/audio/highpass.hpp"
#include "pamcurator/audio/resample.hpp"
#include "test_support.hpp"

using namespace pam;
using namespace pam::audio;
using Catch::Approx;

namespace {

std::filesystem::path write_wav(const std::filesystem::path& dir, const std::string& name, const std::vector<float>& x,
                                int rate, WavSampleFormat fmt = WavSampleFormat::pcm16) {
  const auto path = dir / name;
  write_file_atomic(path, encode_wav(x, rate, fmt));
  return path;
}

}  // namespace

TEST_CASE("decode splits long files into 5-minute segments", "[audio][decode]") {
  const auto dir = test::temp_dir("decode_split");
  SECTION("12-minute WAV at 48 kHz gives 300 s, 300 s, 120 s") {
    const std::vector<float> x(static_cast<std::size_t>(12 * 60 * 48000), 0.01f);
    const auto segs = decode(write_wav(dir, "long.wav", x, 48000));
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].duration_s == Approx(300.0));
    CHECK(segs[1].duration_s == Approx(300.0));
    CHECK(segs[2].duration_s == Approx(120.0));
    CHECK(segs[0].sample_id == "long_s000");
    CHECK(segs[2].sample_id == "long_s002");
    CHECK(segs[1].start_time - segs[0].start_time == std::chrono::seconds{300});
    std::size_t total = 0;
    for (const auto& s : segs) {
      validate(s);
      total += s.size();
    }
    CHECK(total == x.size());
  }
  SECTION("4-minute file gives one 240 s segment") {
    const std::vector<float> x(static_cast<std::size_t>(4 * 60 * 32000), 0.0f);
    const auto segs = decode(write_wav(dir, "short.wav", x, 32000));
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].duration_s == Approx(240.0));
    CHECK(segs[0].sample_id == "short");
  }
  SECTION("zero-length file gives no segments") {
    const auto path = dir / "empty.wav";
    std::ofstream(path).close();
    CHECK(decode(path).empty());
    CHECK(decode(write_wav(dir, "nodata.wav", {}, 32000)).empty());
  }
}

TEST_CASE("WAV decoding handles every supported sample format", "[audio][wav]") {
  const auto x = test::sine(440.0, 32000, 4000, 0.7);
  for (auto fmt : {WavSampleFormat::pcm16, WavSampleFormat::pcm24, WavSampleFormat::pcm32, WavSampleFormat::float32}) {
    const auto bytes = encode_wav(x, 32000, fmt);
    const auto pcm = decode_wav(bytes);
    REQUIRE(pcm.mono.size() == x.size());
    const double tol = fmt == WavSampleFormat::pcm16 ? 1.0 / 32768 : 1e-6;
    for (std::size_t i = 0; i < x.size(); i += 97) CHECK(std::abs(pcm.mono[i] - x[i]) <= tol);
  }
}

TEST_CASE("WAV decoding reports corrupt and unsupported input", "[audio][wav][errors]") {
  auto bytes = encode_wav(test::sine(440.0, 32000, 100), 32000, WavSampleFormat::pcm16);
  SECTION("bad RIFF tag") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_wav(bytes), DecodeError);
  }
  SECTION("data chunk past end of file carries the byte offset") {
    bytes.resize(bytes.size() - 10);
    try {
      decode_wav(bytes);
      FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
      CHECK(e.offset() == bytes.size());
    }
  }
  SECTION("8-bit PCM is an explicit unsupported-format error") {
    bytes[34] = 8;  // bits per sample
    CHECK_THROWS_AS(decode_wav(bytes), UnsupportedFormatError);
  }
  SECTION("64-bit float is unsupported") {
    bytes[20] = 3;
    bytes[34] = 64;
    CHECK_THROWS_AS(decode_wav(bytes), UnsupportedFormatError);
  }
}

TEST_CASE("FLAC decoding matches the integer samples of its WAV twin", "[audio][flac]") {
  for (const char* name : {"mono16_32k", "stereo24_48k", "stereo16_44k", "mono8_16k"}) {
    INFO(name);
    const auto flac = decode_flac(read_file_bytes(test::data_path(std::string(name) + ".flac")));
    const auto wav = decode_wav(read_file_bytes(test::data_path(std::string(name) + ".wav")));
    CHECK(flac.sample_rate_hz == wav.sample_rate_hz);
    CHECK(flac.channels == wav.channels);
    REQUIRE(flac.mono.size() == wav.mono.size());
    CHECK(flac.mono == wav.mono);
  }
  const auto segs = decode(test::data_path("mono16_32k.flac"));
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].duration_s == Approx(2.5));
}

TEST_CASE("FLAC corruption is detected with a byte offset", "[audio][flac][errors]") {
  auto bytes = read_file_bytes(test::data_path("mono16_32k.flac"));
  bytes[bytes.size() / 2] ^= 0x10;
  try {
    decode_flac(bytes);
    FAIL("expected DecodeError");
  } catch (const DecodeError& e) {
    CHECK(e.offset() > 0);
    CHECK(e.offset() < bytes.size());
  }
  std::vector<std::uint8_t> junk = {'f', 'L', 'a', 'X', 0, 0};
  CHECK_THROWS_AS(decode_flac(junk), DecodeError);
}

TEST_CASE("resample", "[audio][resample]") {
  SECTION("same rate is bit-identical") {
    const auto seg = make_segment("a", test::white_noise(5000, 0.1, 1), 32000);
    const auto out = resample(seg, 32000);
    CHECK(out.samples == seg.samples);
    CHECK(out.sample_rate_hz == 32000);
  }
  SECTION("1 kHz sine survives 48 -> 32 kHz with < 1 Hz peak error") {
    const auto seg = make_segment("a", test::sine(1000.0, 48000, 48000), 48000);
    const auto out = resample(seg, 32000);
    CHECK(out.sample_rate_hz == 32000);
    CHECK(std::abs(static_cast<double>(out.size()) - 32000.0) <= 1.0);
    CHECK(std::abs(out.duration_s - seg.duration_s) <= 1.0 / 32000);
    CHECK(std::abs(test::peak_frequency(out.samples, 32000, 1 << 17) - 1000.0) < 1.0);
  }
  SECTION("20 kHz sine above the new Nyquist is removed (< 1% RMS)") {
    const auto seg = make_segment("a", test::sine(20000.0, 48000, 48000), 48000);
    const auto out = resample(seg, 32000);
    CHECK(test::rms(out.samples) < 0.01 * test::rms(seg.samples));
  }
  SECTION("target rate must be positive") {
    const auto seg = make_segment("a", {0.f, 0.f}, 48000);
    CHECK_THROWS_AS(resample(seg, 0), ArgumentError);
    CHECK_THROWS_AS(resample(seg, -5), ArgumentError);
  }
  SECTION("round trip through twice the rate preserves band-limited signals") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      std::vector<float> x(16000, 0.f);
      for (int k = 0; k < 6; ++k) {
        const auto tone = test::sine(rng.uniform(100.0, 6000.0), 16000, x.size(), rng.uniform(0.05, 0.2), rng.uniform(0, 6.28));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += tone[i];
      }
      const auto seg = make_segment("x", x, 16000);
      const auto back = resample(resample(seg, 32000), 16000);
      REQUIRE(back.size() == x.size());
      double xy = 0, xx = 0, yy = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        xy += static_cast<double>(x[i]) * back.samples[i];
        xx += static_cast<double>(x[i]) * x[i];
        yy += static_cast<double>(back.samples[i]) * back.samples[i];
      }
      CHECK(xy / std::sqrt(xx * yy) > 0.99);
    }
  }
  SECTION("deterministic") {
    const auto seg = make_segment("a", test::white_noise(9000, 0.2, 3), 44100);
    CHECK(resample(seg, 32000).samples == resample(seg, 32000).samples);
  }
}

TEST_CASE("high-pass at 1 kHz", "[audio][highpass]") {
  constexpr int fs = 32000;
  SECTION("DC offset is removed") {
    const auto seg = make_segment("dc", std::vector<float>(fs, 0.5f), fs);
    CHECK(test::rms(highpass(seg, 1000.0).samples) < 1e-3);
  }
  SECTION("250 Hz is attenuated by at least 24 dB") {
    const auto seg = make_segment("lo", test::sine(250.0, fs, fs), fs);
    const double ratio = test::rms(highpass(seg, 1000.0).samples) / test::rms(seg.samples);
    CHECK(20.0 * std::log10(ratio) <= -24.0);
  }
  SECTION("4 kHz passes within 1 dB") {
    const auto seg = make_segment("hi", test::sine(4000.0, fs, fs), fs);
    const double ratio = test::rms(highpass(seg, 1000.0).samples) / test::rms(seg.samples);
    CHECK(std::abs(20.0 * std::log10(ratio)) < 1.0);
  }
  SECTION("passband ripple above 2x cutoff stays under 1 dB") {
    for (double f : {2000.0, 3000.0, 6000.0, 12000.0}) {
      const auto seg = make_segment("hi", test::sine(f, fs, fs), fs);
      const double ratio = test::rms(highpass(seg, 1000.0).samples) / test::rms(seg.samples);
      CHECK(std::abs(20.0 * std::log10(ratio)) < 1.0);
    }
  }
  SECTION("cutoff outside (0, Nyquist) is rejected") {
    const auto seg = make_segment("x", std::vector<float>(100, 0.f), fs);
    CHECK_THROWS_AS(highpass(seg, 0.0), ArgumentError);
    CHECK_THROWS_AS(highpass(seg, 16000.0), ArgumentError);
  }
}
