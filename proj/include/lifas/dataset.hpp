#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lifas/augment.hpp"
#include "lifas/dsp.hpp"
#include "lifas/tensor.hpp"

namespace lifas {

enum class Split { none, train, val };

std::string to_string(Split split);
Split split_from_string(std::string_view text);

struct ManifestEntry {
  std::string path;  // location of the WAV file
  std::string language;
  std::string speaker_id;
  Split split = Split::none;
};

// Labeled, speaker-attributed clip list. Label index of a language is its
// position in `labels` (sorted distinct languages of the entries).
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> labels;

  void rebuild_labels();
  Index label_index(const std::string& language) const;  // throws on unknown language
  Index count(Split split) const;
};

// Maps a speaker-session directory name to a speaker id. The VoxForge rule
// takes everything before the first '-' (whole name if there is none).
using SpeakerRule = std::function<std::string(const std::string& session_dir_name)>;
std::string voxforge_speaker(const std::string& session_dir_name);

// Walks root/<language>/<speaker_session>/*.wav, one entry per file, split
// unassigned. Deterministic: directories and files visited in sorted order.
// Languages without clips are reported through `warnings` and omitted.
Manifest ingest(const std::string& root_dir, const SpeakerRule& speaker_rule = voxforge_speaker,
                std::vector<std::string>* warnings = nullptr);

// Speaker-disjoint split: per language, speakers are shuffled by the seed and
// assigned whole to the validation split until val_per_lang is reached (the
// speaker crossing the target is truncated to fit), then the remainder fills
// the train split the same way. Output holds exactly train_per_lang +
// val_per_lang entries per language; throws (naming the language) when the
// counts or speaker disjointness cannot be satisfied.
Manifest split_manifest(const Manifest& manifest, Index train_per_lang, Index val_per_lang,
                        std::uint64_t seed);

// CSV with header path,language,speaker_id,split. Fields must not contain
// commas or line breaks.
void save_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

struct Batch {
  Tensor<float> images;       // batch x 1 x height x width, values in [0, 1]
  std::vector<Index> labels;  // label indices into Manifest::labels
};

// On-the-fly batch generation: each clip is decoded, resampled to the
// configured rate, trimmed to clip_len_samples (start-anchored), rendered to
// a spectrogram image, and optionally augmented (train split only). Train
// entries are shuffled by epoch_seed; val order is fixed. Unreadable or short
// files are skipped with a warning; more than 1% skipped fails the epoch.
// Batches are full-sized until the entries run out, so only the last batch of
// an epoch can be smaller. Clips within a batch are processed in parallel;
// the emitted stream is identical at any thread count.
class BatchStream {
 public:
  BatchStream(const Manifest& manifest, Split split, const SpectrogramConfig& config,
              const AugmentPolicy* augment_policy, Index batch_size, std::uint64_t epoch_seed,
              Index clip_len_samples = 60000);

  std::optional<Batch> next();

  Index n_entries() const { return Index(entries_.size()); }
  // Nominal batch count, assuming no skipped files.
  Index n_batches() const;
  Index skipped() const { return skipped_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  struct Item {
    std::string path;
    Index label = 0;
    std::uint64_t augment_seed = 0;
  };

  SpectrogramConfig config_;
  AugmentPolicy augment_;
  bool augment_enabled_ = false;
  Index batch_size_ = 0;
  Index clip_len_ = 0;
  std::vector<Item> entries_;
  std::size_t cursor_ = 0;
  Index skipped_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace lifas
