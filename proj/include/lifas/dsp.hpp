#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lifas/common.hpp"

namespace lifas {

// DSP parameter set. Defaults reproduce the reference pipeline: 16 kHz audio,
// 1024-sample FFT window with 50% overlap, 40 mel bins on 20 Hz..8 kHz,
// power spectrogram with an 80 dB floor, rendered to a 432x288 image.
struct SpectrogramConfig {
  int sample_rate_hz = 16000;
  int n_fft = 1024;
  int hop_samples = 512;
  int n_mels = 40;
  float fmin_hz = 20.0f;
  float fmax_hz = 8000.0f;
  float power_exponent = 2.0f;
  float top_db = 80.0f;
  int image_width_px = 432;
  int image_height_px = 288;

  void validate() const;
  int n_bins() const { return n_fft / 2 + 1; }
};

// m = 2595 * log10(1 + f/700). Negative input rejected.
double hz_to_mel(double f_hz);

// Analytic inverse: f = 700 * (10^(m/2595) - 1). Negative input rejected.
double mel_to_hz(double mels);

namespace detail {
void check_pow2(std::size_t n);
std::vector<std::uint32_t> bitrev_permutation(std::size_t n);
std::vector<std::complex<double>> forward_twiddles(std::size_t n);
}  // namespace detail

// Radix-2 in-place FFT with precomputed tables; reuse one plan across frames.
// forward() is the unnormalized DFT X[k] = sum_n x[n] e^(-2*pi*i*k*n/N).
template <class Scalar>
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), bitrev_(detail::bitrev_permutation(n)) {
    const auto tw = detail::forward_twiddles(n);
    twiddles_.reserve(tw.size());
    for (const auto& w : tw) twiddles_.emplace_back(static_cast<Scalar>(w.real()),
                                                    static_cast<Scalar>(w.imag()));
  }

  std::size_t size() const { return n_; }

  void forward(std::complex<Scalar>* x) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t j = bitrev_[i];
      if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t twiddle_step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        std::size_t k = 0;
        for (std::size_t j = start; j < start + len / 2; ++j, k += twiddle_step) {
          const std::complex<Scalar> t = twiddles_[k] * x[j + len / 2];
          x[j + len / 2] = x[j] - t;
          x[j] += t;
        }
      }
    }
  }

  // Inverse transform including the 1/N factor (conjugation trick).
  void inverse(std::complex<Scalar>* x) const {
    for (std::size_t i = 0; i < n_; ++i) x[i] = std::conj(x[i]);
    forward(x);
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n_);
    for (std::size_t i = 0; i < n_; ++i) x[i] = std::conj(x[i]) * inv_n;
  }

 private:
  std::size_t n_;
  std::vector<std::uint32_t> bitrev_;
  std::vector<std::complex<Scalar>> twiddles_;
};

// One-shot convenience; length must be a power of two.
template <class Scalar>
std::vector<std::complex<Scalar>> fft(std::vector<std::complex<Scalar>> x) {
  FftPlan<Scalar> plan(x.size());
  plan.forward(x.data());
  return x;
}

// Triangular mel filters, one per row, peak-normalized to 1.0. Columns are
// FFT bins 0..n_fft/2.
struct MelFilterbank {
  Eigen::MatrixXf weights;
};

MelFilterbank mel_filterbank(const SpectrogramConfig& config);

// Hann-windowed frames at offsets 0, hop, 2*hop, ... (no center padding);
// rows are the n_fft/2+1 non-redundant bins, columns are frames.
// n_frames = 1 + floor((len - n_fft) / hop). Input shorter than n_fft throws.
Eigen::MatrixXcf stft(std::span<const float> samples, const SpectrogramConfig& config);

// D = 10*log10(max(S, eps)/ref), ref = max cell, clamped below at -top_db.
Eigen::MatrixXf power_to_db(const Eigen::MatrixXf& power, float top_db);

// Mel spectrogram in dB. values is n_mels x n_frames.
struct Spectrogram {
  Eigen::MatrixXf values;
  SpectrogramConfig config;
};

Spectrogram melspectrogram(std::span<const float> samples, const SpectrogramConfig& config);

// Min-max normalized to [0,1] (constant input maps to 0.5), flipped so low
// frequencies are at the bottom row, bilinear-resized to the configured
// image_height_px x image_width_px.
Eigen::MatrixXf render_image(const Spectrogram& spec);

// Half-pixel-center bilinear resampling; exposed for direct testing.
Eigen::MatrixXf bilinear_resize(const Eigen::MatrixXf& in, int out_rows, int out_cols);

// Raw dB values, row-major, 9 significant digits.
void write_spectrogram_csv(const Spectrogram& spec, const std::filesystem::path& path);

// 8-bit binary PGM (P5); pixel = round(value * 255).
void write_pgm(const Eigen::MatrixXf& image, const std::filesystem::path& path);

}  // namespace lifas
