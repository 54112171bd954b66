#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "lifas/audio.hpp"
#include "lifas/dsp.hpp"
#include "lifas/model.hpp"
#include "lifas/synth.hpp"

namespace testutil {

// Scratch directory under the system temp root, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("lifas_" + tag + "_" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& leaf) const { return path / leaf; }
};

// Small geometry so pipeline tests run in milliseconds.
inline lifas::SpectrogramConfig tiny_spectro() {
  lifas::SpectrogramConfig config;
  config.n_fft = 256;
  config.hop_samples = 128;
  config.n_mels = 16;
  config.image_height_px = 32;
  config.image_width_px = 48;
  return config;
}

inline lifas::ModelSpec tiny_model_spec(int n_classes) {
  lifas::ModelSpec spec;
  spec.stem_channels = 4;
  spec.stage_channels = {4, 6};
  spec.blocks_per_stage = {1, 1};
  spec.n_classes = n_classes;
  spec.input_height = 32;
  spec.input_width = 48;
  spec.stem_stride = 2;
  return spec;
}

// Two easily separable classes on 0.25 s clips; 4 speakers x 5 clips each.
inline lifas::SyntheticTaskSpec tiny_task_spec(std::uint64_t seed = 0) {
  lifas::SyntheticTaskSpec task;
  task.classes = {{"lowband", 400.0, 2000.0, 8.0}, {"highband", 3000.0, 6000.0, 0.0}};
  task.train_clips_per_class = 16;
  task.val_clips_per_class = 4;
  task.n_speakers_per_class = 4;
  task.clip_len_samples = 4000;
  task.sample_rate_hz = 16000;
  task.seed = seed;
  return task;
}

inline void write_sine_wav(const std::filesystem::path& path, int n_samples, double freq_hz,
                           int sample_rate_hz = 16000) {
  lifas::AudioClip clip;
  clip.sample_rate_hz = sample_rate_hz;
  clip.samples.resize(static_cast<std::size_t>(n_samples));
  for (int t = 0; t < n_samples; ++t)
    clip.samples[static_cast<std::size_t>(t)] =
        0.4f * std::sin(2.0 * std::numbers::pi * freq_hz * t / sample_rate_hz);
  lifas::save_wav(clip, path);
}

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  return lifas::read_file(path);
}

}  // namespace testutil
