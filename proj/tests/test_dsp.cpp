#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lifas/dsp.hpp"
#include "oracles.hpp"

using lifas::Error;
using lifas::SpectrogramConfig;

namespace {

// Fixed xorshift stream so test inputs never depend on library RNG.
struct TestStream {
  std::uint64_t state = 0x9e3779b97f4a7c15ull;
  double next() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return static_cast<double>(state >> 11) * 0x1.0p-53;
  }
  double next_pm1() { return next() * 2.0 - 1.0; }
};

}  // namespace

TEST_CASE("mel scale matches its defining formula and inverts") {
  CHECK(lifas::hz_to_mel(0.0) == 0.0);
  CHECK(lifas::mel_to_hz(0.0) == 0.0);
  CHECK(lifas::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(lifas::hz_to_mel(1000.0) ==
        doctest::Approx(2595.0 * std::log10(1.0 + 1000.0 / 700.0)).epsilon(1e-12));
  for (double hz : {1.0, 20.0, 440.0, 3000.0, 8000.0, 22050.0}) {
    CHECK(lifas::mel_to_hz(lifas::hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-12));
  }
  CHECK(lifas::hz_to_mel(8000.0) > lifas::hz_to_mel(7999.0));  // monotone
  CHECK_THROWS_AS(lifas::hz_to_mel(-1.0), Error);
  CHECK_THROWS_AS(lifas::mel_to_hz(-1.0), Error);
}

TEST_CASE("fft agrees with the O(n^2) DFT") {
  TestStream stream;
  for (std::size_t n : {std::size_t{2}, std::size_t{8}, std::size_t{64}, std::size_t{1024}}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {stream.next_pm1(), stream.next_pm1()};

    const auto ref = oracle::naive_dft(x);
    const auto fast = lifas::fft<double>(x);
    double ref_max = 0.0;
    for (const auto& v : ref) ref_max = std::max(ref_max, std::abs(v));
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(std::abs(fast[k] - ref[k]) <= 1e-9 * ref_max);
    }

    // Single-precision plan on the same input.
    std::vector<std::complex<float>> xf(n);
    for (std::size_t i = 0; i < n; ++i)
      xf[i] = {static_cast<float>(x[i].real()), static_cast<float>(x[i].imag())};
    const auto fastf = lifas::fft<float>(xf);
    for (std::size_t k = 0; k < n; ++k) {
      const std::complex<double> got(fastf[k].real(), fastf[k].imag());
      CHECK(std::abs(got - ref[k]) <= 1e-4 * ref_max);
    }
  }
}

TEST_CASE("fft of canonical inputs") {
  SUBCASE("unit impulse transforms to all ones") {
    std::vector<std::complex<double>> x(16, {0.0, 0.0});
    x[0] = {1.0, 0.0};
    for (const auto& v : lifas::fft<double>(x)) {
      CHECK(std::abs(v - std::complex<double>(1.0, 0.0)) < 1e-12);
    }
  }
  SUBCASE("cosine at an exact bin puts N/2 at bins k and N-k") {
    const std::size_t n = 64, k = 5;
    std::vector<std::complex<double>> x(n);
    for (std::size_t t = 0; t < n; ++t)
      x[t] = {std::cos(2.0 * oracle::kPi * double(k) * double(t) / double(n)), 0.0};
    const auto spec = lifas::fft<double>(x);
    for (std::size_t b = 0; b < n; ++b) {
      const double expect = (b == k || b == n - k) ? double(n) / 2.0 : 0.0;
      CHECK(std::abs(spec[b] - std::complex<double>(expect, 0.0)) < 1e-10);
    }
  }
}

TEST_CASE("fft inverse undoes forward") {
  TestStream stream;
  std::vector<std::complex<double>> x(256);
  for (auto& v : x) v = {stream.next_pm1(), stream.next_pm1()};
  auto y = x;
  lifas::FftPlan<double> plan(x.size());
  plan.forward(y.data());
  plan.inverse(y.data());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-12);
}

TEST_CASE("fft rejects non-power-of-two lengths") {
  CHECK_THROWS_AS(lifas::FftPlan<float>(0), Error);
  CHECK_THROWS_AS(lifas::FftPlan<float>(3), Error);
  CHECK_THROWS_AS(lifas::FftPlan<float>(100), Error);
}

TEST_CASE("stft frames and values match a direct windowed DFT") {
  SpectrogramConfig config;
  config.sample_rate_hz = 16000;
  config.n_fft = 16;
  config.hop_samples = 8;

  TestStream stream;
  std::vector<float> samples(44);
  for (auto& s : samples) s = static_cast<float>(stream.next_pm1());

  const auto spec = lifas::stft(samples, config);
  // 1 + floor((44 - 16) / 8) = 4 frames, 9 non-redundant bins.
  REQUIRE(spec.rows() == 9);
  REQUIRE(spec.cols() == 4);

  for (int f = 0; f < 4; ++f) {
    std::vector<std::complex<double>> frame(16);
    for (int n = 0; n < 16; ++n) {
      const double w = 0.5 * (1.0 - std::cos(2.0 * oracle::kPi * n / 15.0));
      frame[static_cast<std::size_t>(n)] = {w * samples[static_cast<std::size_t>(f * 8 + n)], 0.0};
    }
    const auto ref = oracle::naive_dft(frame);
    for (int k = 0; k < 9; ++k) {
      const std::complex<double> got(spec(k, f).real(), spec(k, f).imag());
      CHECK(std::abs(got - ref[static_cast<std::size_t>(k)]) < 1e-5);
    }
  }
}

TEST_CASE("stft rejects input shorter than one window") {
  SpectrogramConfig config;
  std::vector<float> samples(static_cast<std::size_t>(config.n_fft) - 1, 0.0f);
  CHECK_THROWS_AS(lifas::stft(samples, config), Error);
}

TEST_CASE("stft frame count for the default config") {
  SpectrogramConfig config;
  std::vector<float> samples(60000, 0.01f);
  const auto spec = lifas::stft(samples, config);
  CHECK(spec.rows() == 513);
  CHECK(spec.cols() == 1 + (60000 - 1024) / 512);  // 116
}

TEST_CASE("mel filterbank matches an independent recompute") {
  SpectrogramConfig config;  // defaults: 40 mels, 20..8000 Hz, n_fft 1024 @ 16 kHz
  const auto fb = lifas::mel_filterbank(config);
  REQUIRE(fb.weights.rows() == 40);
  REQUIRE(fb.weights.cols() == 513);

  // Rebuild from the definition: n_mels + 2 breakpoints equally spaced in mel,
  // mapped to fractional FFT bins, triangles, peak-normalized.
  const double mel_lo = 2595.0 * std::log10(1.0 + 20.0 / 700.0);
  const double mel_hi = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  std::vector<double> pos(42);
  for (int i = 0; i < 42; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * i / 41.0;
    const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    pos[static_cast<std::size_t>(i)] = hz * 1024.0 / 16000.0;
  }
  for (int i = 0; i < 40; ++i) {
    std::vector<double> row(513, 0.0);
    double peak = 0.0;
    for (int b = 0; b < 513; ++b) {
      const double rise = (b - pos[size_t(i)]) / (pos[size_t(i) + 1] - pos[size_t(i)]);
      const double fall = (pos[size_t(i) + 2] - b) / (pos[size_t(i) + 2] - pos[size_t(i) + 1]);
      row[static_cast<std::size_t>(b)] = std::max(0.0, std::min(rise, fall));
      peak = std::max(peak, row[static_cast<std::size_t>(b)]);
    }
    REQUIRE(peak > 0.0);
    float row_max = 0.0f;
    for (int b = 0; b < 513; ++b) {
      CHECK(std::abs(fb.weights(i, b) - row[static_cast<std::size_t>(b)] / peak) < 1e-6);
      CHECK(fb.weights(i, b) >= 0.0f);
      row_max = std::max(row_max, fb.weights(i, b));
    }
    CHECK(row_max == 1.0f);  // peak normalization is exact
  }
}

TEST_CASE("mel filterbank centers shift up with the band index") {
  SpectrogramConfig config;
  const auto fb = lifas::mel_filterbank(config);
  int prev_argmax = -1;
  for (int i = 0; i < fb.weights.rows(); ++i) {
    int argmax = 0;
    for (int b = 1; b < fb.weights.cols(); ++b)
      if (fb.weights(i, b) > fb.weights(i, argmax)) argmax = b;
    CHECK(argmax >= prev_argmax);
    prev_argmax = argmax;
  }
}

TEST_CASE("mel filterbank rejects configs whose filters have no bin support") {
  SpectrogramConfig config;
  config.n_fft = 64;  // 33 bins cannot support 40 triangles starting at 20 Hz
  config.hop_samples = 32;
  CHECK_THROWS_AS(lifas::mel_filterbank(config), Error);
}

TEST_CASE("config validation rejects out-of-range parameters") {
  SpectrogramConfig config;
  config.fmax_hz = 8001.0f;  // above Nyquist for 16 kHz
  CHECK_THROWS_AS(config.validate(), Error);
  config = SpectrogramConfig{};
  config.n_fft = 1000;
  CHECK_THROWS_AS(config.validate(), Error);
  config = SpectrogramConfig{};
  config.hop_samples = 2048;
  CHECK_THROWS_AS(config.validate(), Error);
  config = SpectrogramConfig{};
  config.fmin_hz = 900.0f;
  config.fmax_hz = 800.0f;
  CHECK_THROWS_AS(config.validate(), Error);
}

TEST_CASE("power_to_db maps known values and clamps at -top_db") {
  Eigen::MatrixXf power(1, 4);
  power << 1.0f, 0.1f, 0.01f, 1e-12f;
  const auto db = lifas::power_to_db(power, 80.0f);
  CHECK(db(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(db(0, 1) == doctest::Approx(-10.0).epsilon(1e-5));
  CHECK(db(0, 2) == doctest::Approx(-20.0).epsilon(1e-5));
  CHECK(db(0, 3) == -80.0f);  // 1e-12 floors to 1e-10 -> -100 dB -> clamp

  Eigen::MatrixXf negative(1, 1);
  negative << -0.5f;
  CHECK_THROWS_AS(lifas::power_to_db(negative, 80.0f), Error);
}

TEST_CASE("power_to_db output is always in [-top_db, 0]") {
  TestStream stream;
  Eigen::MatrixXf power(8, 8);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      power(r, c) = static_cast<float>(std::pow(10.0, stream.next() * 14.0 - 12.0));
  const auto db = lifas::power_to_db(power, 80.0f);
  CHECK(db.maxCoeff() == 0.0f);  // the reference cell itself
  CHECK(db.minCoeff() >= -80.0f);
}

TEST_CASE("melspectrogram matches a from-scratch double-precision pipeline") {
  SpectrogramConfig config;
  config.sample_rate_hz = 16000;
  config.n_fft = 32;
  config.hop_samples = 16;
  config.n_mels = 6;
  config.fmin_hz = 100.0f;
  config.fmax_hz = 8000.0f;

  TestStream stream;
  std::vector<float> samples(96);
  for (auto& s : samples) s = static_cast<float>(stream.next_pm1());

  const auto spec = lifas::melspectrogram(samples, config);
  REQUIRE(spec.values.rows() == 6);
  REQUIRE(spec.values.cols() == 5);  // 1 + (96-32)/16

  // Whole pipeline again, in double, via the naive DFT.
  const int n_bins = 17;
  Eigen::MatrixXd power(n_bins, 5);
  for (int f = 0; f < 5; ++f) {
    std::vector<std::complex<double>> frame(32);
    for (int n = 0; n < 32; ++n) {
      const double w = 0.5 * (1.0 - std::cos(2.0 * oracle::kPi * n / 31.0));
      frame[static_cast<std::size_t>(n)] = {w * samples[static_cast<std::size_t>(f * 16 + n)], 0.0};
    }
    const auto dft = oracle::naive_dft(frame);
    for (int k = 0; k < n_bins; ++k) power(k, f) = std::norm(dft[static_cast<std::size_t>(k)]);
  }

  const double mel_lo = 2595.0 * std::log10(1.0 + 100.0 / 700.0);
  const double mel_hi = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  std::vector<double> pos(8);
  for (int i = 0; i < 8; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * i / 7.0;
    pos[static_cast<std::size_t>(i)] = (700.0 * (std::pow(10.0, mel / 2595.0) - 1.0)) * 32.0 / 16000.0;
  }
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(6, n_bins);
  for (int i = 0; i < 6; ++i) {
    double peak = 0.0;
    for (int b = 0; b < n_bins; ++b) {
      const double rise = (b - pos[size_t(i)]) / (pos[size_t(i) + 1] - pos[size_t(i)]);
      const double fall = (pos[size_t(i) + 2] - b) / (pos[size_t(i) + 2] - pos[size_t(i) + 1]);
      fb(i, b) = std::max(0.0, std::min(rise, fall));
      peak = std::max(peak, fb(i, b));
    }
    REQUIRE(peak > 0.0);
    fb.row(i) /= peak;
  }

  Eigen::MatrixXd mel = fb * power;
  const double ref = std::max(mel.maxCoeff(), 1e-10);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 5; ++c) {
      const double db = std::max(10.0 * std::log10(std::max(mel(r, c), 1e-10) / ref), -80.0);
      CHECK(std::abs(spec.values(r, c) - db) < 0.05);
    }
  }
}

TEST_CASE("melspectrogram concentrates a pure tone in the right band") {
  SpectrogramConfig config;
  std::vector<float> samples(16000);
  for (std::size_t n = 0; n < samples.size(); ++n)
    samples[n] = 0.5f * static_cast<float>(std::sin(2.0 * oracle::kPi * 1000.0 * double(n) / 16000.0));
  const auto spec = lifas::melspectrogram(samples, config);

  // Which filter has the largest weight at the tone's FFT bin?
  const auto fb = lifas::mel_filterbank(config);
  const int tone_bin = static_cast<int>(std::lround(1000.0 * 1024.0 / 16000.0));
  int expected_row = 0;
  for (int i = 1; i < fb.weights.rows(); ++i)
    if (fb.weights(i, tone_bin) > fb.weights(expected_row, tone_bin)) expected_row = i;

  for (int f = 0; f < spec.values.cols(); ++f) {
    int got = 0;
    for (int r = 1; r < spec.values.rows(); ++r)
      if (spec.values(r, f) > spec.values(got, f)) got = r;
    CHECK(std::abs(got - expected_row) <= 1);
  }
}

TEST_CASE("bilinear_resize hand-checked 2x2 -> 4x4") {
  Eigen::MatrixXf in(2, 2);
  in << 0.0f, 1.0f, 2.0f, 3.0f;
  const auto out = lifas::bilinear_resize(in, 4, 4);
  REQUIRE(out.rows() == 4);
  REQUIRE(out.cols() == 4);
  // Half-pixel centers with edge clamping; worked out by hand.
  const float expected[4][4] = {{0.0f, 0.25f, 0.75f, 1.0f},
                                {0.5f, 0.75f, 1.25f, 1.5f},
                                {1.5f, 1.75f, 2.25f, 2.5f},
                                {2.0f, 2.25f, 2.75f, 3.0f}};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) CHECK(out(r, c) == doctest::Approx(expected[r][c]).epsilon(1e-6));
}

TEST_CASE("bilinear_resize preserves size, constants, and single pixels") {
  Eigen::MatrixXf in(3, 5);
  TestStream stream;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) in(r, c) = static_cast<float>(stream.next_pm1());

  SUBCASE("same-size resize is the identity") {
    const auto out = lifas::bilinear_resize(in, 3, 5);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 5; ++c) CHECK(out(r, c) == in(r, c));
  }
  SUBCASE("constant input stays constant at any size") {
    const auto out = lifas::bilinear_resize(Eigen::MatrixXf::Constant(3, 5, 0.625f), 7, 11);
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 11; ++c) CHECK(out(r, c) == 0.625f);
  }
  SUBCASE("1x1 input broadcasts") {
    const auto out = lifas::bilinear_resize(Eigen::MatrixXf::Constant(1, 1, 0.25f), 4, 6);
    CHECK(out(0, 0) == 0.25f);
    CHECK(out(3, 5) == 0.25f);
  }
  SUBCASE("empty output rejected") {
    CHECK_THROWS_AS(lifas::bilinear_resize(in, 0, 5), Error);
  }
}

TEST_CASE("render_image normalizes, flips, and resizes") {
  SpectrogramConfig config;
  config.n_mels = 4;
  config.image_height_px = 4;  // identity-size resize isolates the flip
  config.image_width_px = 3;

  lifas::Spectrogram spec;
  spec.config = config;
  spec.values.resize(4, 3);
  spec.values << -80.0f, -80.0f, -80.0f,   // mel row 0 (lowest band)
                 -60.0f, -60.0f, -60.0f,
                 -40.0f, -40.0f, -40.0f,
                   0.0f,   0.0f,   0.0f;   // mel row 3 (highest band)

  const auto img = lifas::render_image(spec);
  REQUIRE(img.rows() == 4);
  REQUIRE(img.cols() == 3);
  // Lowest band ends up at the bottom of the image, min-max mapped to [0,1].
  for (int c = 0; c < 3; ++c) {
    CHECK(img(0, c) == 1.0f);    // was row 3 (0 dB)
    CHECK(img(1, c) == 0.5f);    // -40 dB
    CHECK(img(2, c) == 0.25f);   // -60 dB
    CHECK(img(3, c) == 0.0f);    // -80 dB
  }
}

TEST_CASE("render_image maps constant input to 0.5 and hits the configured size") {
  SpectrogramConfig config;  // 432 x 288 defaults
  lifas::Spectrogram spec;
  spec.config = config;
  spec.values = Eigen::MatrixXf::Constant(40, 116, -30.0f);
  const auto img = lifas::render_image(spec);
  CHECK(img.rows() == 288);
  CHECK(img.cols() == 432);
  CHECK(img.minCoeff() == 0.5f);
  CHECK(img.maxCoeff() == 0.5f);
}

TEST_CASE("spectrogram csv round trips at full float precision") {
  lifas::Spectrogram spec;
  spec.values.resize(2, 3);
  spec.values << -0.123456789f, -80.0f, 0.0f, -12.3456783f, -1e-5f, -79.9999924f;

  const auto path = std::filesystem::temp_directory_path() / "lifas_test_spec.csv";
  lifas::write_spectrogram_csv(spec, path);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    REQUIRE(row < 2);
    float a = 0, b = 0, c = 0;
    REQUIRE(std::sscanf(line.c_str(), "%f,%f,%f", &a, &b, &c) == 3);
    CHECK(a == spec.values(row, 0));
    CHECK(b == spec.values(row, 1));
    CHECK(c == spec.values(row, 2));
    ++row;
  }
  CHECK(row == 2);
  std::filesystem::remove(path);
}

TEST_CASE("pgm writer emits the exact header and clamped bytes") {
  Eigen::MatrixXf img(2, 3);
  img << 0.0f, 0.5f, 1.0f, 0.25f, -0.1f, 1.1f;
  const auto path = std::filesystem::temp_directory_path() / "lifas_test_img.pgm";
  lifas::write_pgm(img, path);

  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(contents.size() == header.size() + 6);
  CHECK(contents.compare(0, header.size(), header) == 0);
  const unsigned char* px = reinterpret_cast<const unsigned char*>(contents.data() + header.size());
  CHECK(px[0] == 0);
  CHECK(px[1] == 128);  // lround(127.5) rounds away from zero
  CHECK(px[2] == 255);
  CHECK(px[3] == 64);
  CHECK(px[4] == 0);    // clamped from below
  CHECK(px[5] == 255);  // clamped from above
  std::filesystem::remove(path);
}
