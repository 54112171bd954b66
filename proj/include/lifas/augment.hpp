#pragma once

#include <cstdint>

#include "lifas/dsp.hpp"

namespace lifas {

enum class MaskFill { mean, min };

// Masking policy. F and T are maximum widths in mel rows / frames; each mask
// draws width uniform in [0, F] (or [0, T]) and a start uniform over valid
// positions. Checked against the spectrogram shape at application time.
struct AugmentPolicy {
  int freq_mask_param = 0;  // F
  int time_mask_param = 0;  // T
  int n_freq_masks = 0;
  int n_time_masks = 0;
  MaskFill mask_fill = MaskFill::mean;

  void validate() const;
  bool enabled() const { return n_freq_masks > 0 || n_time_masks > 0; }
};

// Masks whole mel rows. Input is not modified; the fill value is computed
// from the input spectrogram (mean or min of all cells).
Spectrogram freq_mask(const Spectrogram& spec, const AugmentPolicy& policy, std::uint64_t rng_seed);

// Masks whole frames (columns); otherwise identical to freq_mask.
Spectrogram time_mask(const Spectrogram& spec, const AugmentPolicy& policy, std::uint64_t rng_seed);

// freq_mask then time_mask with seeds derived from rng_seed.
Spectrogram augment(const Spectrogram& spec, const AugmentPolicy& policy, std::uint64_t rng_seed);

}  // namespace lifas
