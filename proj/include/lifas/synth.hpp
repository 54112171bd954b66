#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lifas/dataset.hpp"

namespace lifas {

// One synthetic "language": band-limited noise in [band_lo_hz, band_hi_hz]
// with sinusoidal amplitude modulation at am_rate_hz.
struct SynthClass {
  std::string name;
  double band_lo_hz = 0.0;
  double band_hi_hz = 0.0;
  double am_rate_hz = 0.0;
};

struct SyntheticTaskSpec {
  std::vector<SynthClass> classes;
  Index train_clips_per_class = 200;
  Index val_clips_per_class = 50;
  Index n_speakers_per_class = 10;
  Index clip_len_samples = 60000;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 0;

  void validate() const;
};

// One clip of the class signal: noise built from randomly weighted DFT-grid
// sinusoids confined to the class band, then amplitude-modulated and peak
// normalized. Every spectral component lands exactly on the clip's DFT grid,
// so the energy stays inside [band_lo_hz, band_hi_hz].
std::vector<float> synth_clip(const SynthClass& cls, Index clip_len_samples, int sample_rate_hz,
                              std::uint64_t seed);

// Writes a VoxForge-like corpus tree out_dir/<class>/<speaker-session>/*.wav
// plus out_dir/manifest.csv (split unassigned), and returns the manifest.
// Clips are distributed round-robin over the synthetic speakers.
Manifest synth_corpus(const SyntheticTaskSpec& spec, const std::string& out_dir);

}  // namespace lifas
