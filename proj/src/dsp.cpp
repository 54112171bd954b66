#include "lifas/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace lifas {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr float kPowerFloor = 1e-10f;
}  // namespace

void SpectrogramConfig::validate() const {
  if (sample_rate_hz <= 0)
    throw Error(Error::Code::bad_argument, "SpectrogramConfig: sample_rate_hz must be positive");
  if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0)
    throw Error(Error::Code::bad_argument, "SpectrogramConfig: n_fft must be a power of two");
  if (hop_samples <= 0 || hop_samples > n_fft)
    throw Error(Error::Code::bad_argument, "SpectrogramConfig: need 0 < hop_samples <= n_fft");
  if (n_mels < 2) throw Error(Error::Code::bad_argument, "SpectrogramConfig: n_mels must be >= 2");
  if (!(fmin_hz >= 0.0f) || !(fmin_hz < fmax_hz))
    throw Error(Error::Code::bad_argument, "SpectrogramConfig: need 0 <= fmin_hz < fmax_hz");
  if (!(fmax_hz <= static_cast<float>(sample_rate_hz) / 2.0f))
    throw Error(Error::Code::bad_argument, "SpectrogramConfig: fmax_hz above Nyquist");
  if (top_db <= 0.0f) throw Error(Error::Code::bad_argument, "SpectrogramConfig: top_db must be positive");
  if (power_exponent <= 0.0f)
    throw Error(Error::Code::bad_argument, "SpectrogramConfig: power_exponent must be positive");
  if (image_width_px <= 0 || image_height_px <= 0)
    throw Error(Error::Code::bad_argument, "SpectrogramConfig: image dimensions must be positive");
}

double hz_to_mel(double f_hz) {
  if (f_hz < 0.0) throw Error(Error::Code::bad_argument, "hz_to_mel: negative frequency");
  return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double mel_to_hz(double mels) {
  if (mels < 0.0) throw Error(Error::Code::bad_argument, "mel_to_hz: negative mel value");
  return 700.0 * (std::pow(10.0, mels / 2595.0) - 1.0);
}

namespace detail {

void check_pow2(std::size_t n) {
  if (n == 0 || (n & (n - 1)) != 0)
    throw Error(Error::Code::bad_argument,
                "fft: length " + std::to_string(n) + " is not a power of two");
}

std::vector<std::uint32_t> bitrev_permutation(std::size_t n) {
  check_pow2(n);
  std::vector<std::uint32_t> perm(n);
  std::uint32_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t r = 0;
    for (std::uint32_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    perm[i] = r;
  }
  return perm;
}

std::vector<std::complex<double>> forward_twiddles(std::size_t n) {
  check_pow2(n);
  std::vector<std::complex<double>> tw(std::max<std::size_t>(n / 2, 1));
  for (std::size_t k = 0; k < tw.size(); ++k) {
    const double angle = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    tw[k] = {std::cos(angle), std::sin(angle)};
  }
  return tw;
}

}  // namespace detail

MelFilterbank mel_filterbank(const SpectrogramConfig& config) {
  config.validate();
  const int n_bins = config.n_bins();
  const int n_mels = config.n_mels;

  // n_mels + 2 breakpoints, equally spaced in mel, mapped to fractional bins.
  const double mel_lo = hz_to_mel(config.fmin_hz);
  const double mel_hi = hz_to_mel(config.fmax_hz);
  std::vector<double> bin_pos(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1);
    const double hz = mel_to_hz(mel);
    bin_pos[static_cast<std::size_t>(i)] = hz * config.n_fft / config.sample_rate_hz;
  }

  MelFilterbank fb;
  fb.weights = Eigen::MatrixXf::Zero(n_mels, n_bins);
  for (int i = 0; i < n_mels; ++i) {
    const double p0 = bin_pos[static_cast<std::size_t>(i)];
    const double p1 = bin_pos[static_cast<std::size_t>(i) + 1];
    const double p2 = bin_pos[static_cast<std::size_t>(i) + 2];
    double peak = 0.0;
    for (int b = static_cast<int>(std::ceil(p0)); b <= static_cast<int>(std::floor(p2)); ++b) {
      if (b < 0 || b >= n_bins) continue;
      const double rise = (b - p0) / (p1 - p0);
      const double fall = (p2 - b) / (p2 - p1);
      const double w = std::max(0.0, std::min(rise, fall));
      fb.weights(i, b) = static_cast<float>(w);
      peak = std::max(peak, w);
    }
    if (peak <= 0.0)
      throw Error(Error::Code::bad_argument,
                  "mel_filterbank: filter " + std::to_string(i) +
                      " has no FFT bin support (n_mels too large for n_fft)");
    fb.weights.row(i) /= static_cast<float>(peak);
  }
  return fb;
}

Eigen::MatrixXcf stft(std::span<const float> samples, const SpectrogramConfig& config) {
  config.validate();
  const std::size_t n_fft = static_cast<std::size_t>(config.n_fft);
  if (samples.size() < n_fft)
    throw Error(Error::Code::bad_argument,
                "stft: input has " + std::to_string(samples.size()) + " samples, needs >= " +
                    std::to_string(n_fft));
  const std::size_t hop = static_cast<std::size_t>(config.hop_samples);
  const std::size_t n_frames = 1 + (samples.size() - n_fft) / hop;
  const int n_bins = config.n_bins();

  std::vector<float> window(n_fft);
  for (std::size_t n = 0; n < n_fft; ++n)
    window[n] = static_cast<float>(
        0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(n) / static_cast<double>(n_fft - 1))));

  FftPlan<float> plan(n_fft);
  Eigen::MatrixXcf out(n_bins, static_cast<Eigen::Index>(n_frames));
  std::vector<std::complex<float>> frame(n_fft);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const float* src = samples.data() + f * hop;
    for (std::size_t n = 0; n < n_fft; ++n) frame[n] = {src[n] * window[n], 0.0f};
    plan.forward(frame.data());
    for (int k = 0; k < n_bins; ++k) out(k, static_cast<Eigen::Index>(f)) = frame[static_cast<std::size_t>(k)];
  }
  return out;
}

Eigen::MatrixXf power_to_db(const Eigen::MatrixXf& power, float top_db) {
  if ((power.array() < 0.0f).any())
    throw Error(Error::Code::bad_argument, "power_to_db: negative input cell");
  Eigen::ArrayXXf floored = power.array().max(kPowerFloor);
  const float ref = floored.maxCoeff();
  Eigen::ArrayXXf db = 10.0f * (floored / ref).log10();
  return db.max(-top_db).matrix();
}

Spectrogram melspectrogram(std::span<const float> samples, const SpectrogramConfig& config) {
  const Eigen::MatrixXcf spectrum = stft(samples, config);
  Eigen::MatrixXf power;
  if (config.power_exponent == 2.0f) {
    power = spectrum.array().abs2();
  } else {
    power = spectrum.array().abs().pow(config.power_exponent);
  }
  const MelFilterbank fb = mel_filterbank(config);
  Eigen::MatrixXf mel = fb.weights * power;
  return Spectrogram{power_to_db(mel, config.top_db), config};
}

Eigen::MatrixXf bilinear_resize(const Eigen::MatrixXf& in, int out_rows, int out_cols) {
  if (in.rows() < 1 || in.cols() < 1 || out_rows < 1 || out_cols < 1)
    throw Error(Error::Code::bad_argument, "bilinear_resize: empty input or output");
  Eigen::MatrixXf out(out_rows, out_cols);
  const double row_scale = static_cast<double>(in.rows()) / out_rows;
  const double col_scale = static_cast<double>(in.cols()) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    // Half-pixel centers: output pixel r samples input coordinate (r+0.5)*scale-0.5.
    double src_r = (r + 0.5) * row_scale - 0.5;
    src_r = std::clamp(src_r, 0.0, static_cast<double>(in.rows() - 1));
    const int r0 = static_cast<int>(src_r);
    const int r1 = std::min<int>(r0 + 1, static_cast<int>(in.rows()) - 1);
    const float fr = static_cast<float>(src_r - r0);
    for (int c = 0; c < out_cols; ++c) {
      double src_c = (c + 0.5) * col_scale - 0.5;
      src_c = std::clamp(src_c, 0.0, static_cast<double>(in.cols() - 1));
      const int c0 = static_cast<int>(src_c);
      const int c1 = std::min<int>(c0 + 1, static_cast<int>(in.cols()) - 1);
      const float fc = static_cast<float>(src_c - c0);
      const float top = in(r0, c0) + fc * (in(r0, c1) - in(r0, c0));
      const float bot = in(r1, c0) + fc * (in(r1, c1) - in(r1, c0));
      out(r, c) = top + fr * (bot - top);
    }
  }
  return out;
}

Eigen::MatrixXf render_image(const Spectrogram& spec) {
  spec.config.validate();
  if (spec.values.size() == 0)
    throw Error(Error::Code::bad_argument, "render_image: empty spectrogram");
  const float lo = spec.values.minCoeff();
  const float hi = spec.values.maxCoeff();
  Eigen::MatrixXf norm;
  if (hi > lo) {
    norm = (spec.values.array() - lo) / (hi - lo);
  } else {
    norm = Eigen::MatrixXf::Constant(spec.values.rows(), spec.values.cols(), 0.5f);
  }
  // Row 0 of the spectrogram is the lowest mel band; image row 0 is the top.
  const Eigen::MatrixXf flipped = norm.colwise().reverse();
  return bilinear_resize(flipped, spec.config.image_height_px, spec.config.image_width_px);
}

void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path) {
  std::string out;
  out.reserve(static_cast<std::size_t>(spec.values.size()) * 14);
  char buf[32];
  for (Eigen::Index r = 0; r < spec.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < spec.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(spec.values(r, c)));
      if (c) out += ',';
      out += buf;
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_pgm(const Eigen::MatrixXf& image, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) +
                    "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(image.size()));
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const long v = std::lround(static_cast<double>(image(r, c)) * 255.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0l, 255l))));
    }
  }
  write_file_atomic(path, out);
}

}  // namespace lifas
