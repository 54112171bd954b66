#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lifas/common.hpp"

namespace lifas {

// Fixed-rate PCM samples plus corpus metadata. Samples are dimensionless
// amplitudes in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate_hz = 0;
  std::string language;     // empty = unknown
  std::string speaker_id;   // empty = unknown
  std::string source_path;  // empty = not file-backed
};

// Throws Error(bad_argument) if the clip violates its invariants (non-empty,
// finite samples in [-1, 1], positive rate).
void validate(const AudioClip& clip);

// RIFF/WAVE, 16-bit signed PCM, 1 or 2 channels. Integer sample s maps to
// s / 32768.0; stereo is downmixed by per-frame channel mean. Malformed input
// throws an Error whose code names the offending part of the container.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);

// Mono PCM16 RIFF/WAVE; float f maps to round(f * 32767) clamped to
// [-32768, 32767].
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);

// Linear-interpolation resampling. Output length = floor(len * target/source).
// A clip already at the target rate is returned unchanged.
AudioClip resample(const AudioClip& clip, int target_rate_hz);

// Every full window of clip_len_samples at the given stride, metadata copied.
// Audio shorter than clip_len_samples yields an empty sequence; no padding.
std::vector<AudioClip> extract_clips(const AudioClip& clip, std::size_t clip_len_samples,
                                     std::size_t stride_samples);

AudioClip load_wav(const std::filesystem::path& path);
void save_wav(const AudioClip& clip, const std::filesystem::path& path);

}  // namespace lifas
