#include "lifas/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <set>

#include "lifas/audio.hpp"
#include "lifas/common.hpp"

namespace fs = std::filesystem;

namespace lifas {

std::string to_string(Split split) {
  switch (split) {
    case Split::none: return "none";
    case Split::train: return "train";
    case Split::val: return "val";
  }
  throw Error(Error::Code::bad_argument, "to_string: invalid split value");
}

Split split_from_string(std::string_view text) {
  if (text == "none") return Split::none;
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  throw Error(Error::Code::manifest, "unknown split '" + std::string(text) + "'");
}

void Manifest::rebuild_labels() {
  std::set<std::string> distinct;
  for (const auto& entry : entries) distinct.insert(entry.language);
  labels.assign(distinct.begin(), distinct.end());
}

Index Manifest::label_index(const std::string& language) const {
  const auto it = std::lower_bound(labels.begin(), labels.end(), language);
  if (it == labels.end() || *it != language)
    throw Error(Error::Code::manifest, "language '" + language + "' not in manifest labels");
  return it - labels.begin();
}

Index Manifest::count(Split split) const {
  Index n = 0;
  for (const auto& entry : entries) n += entry.split == split ? 1 : 0;
  return n;
}

std::string voxforge_speaker(const std::string& session_dir_name) {
  return session_dir_name.substr(0, session_dir_name.find('-'));
}

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

bool has_wav_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return ext == ".wav";
}

}  // namespace

Manifest ingest(const std::string& root_dir, const SpeakerRule& speaker_rule,
                std::vector<std::string>* warnings) {
  const fs::path root(root_dir);
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw Error(Error::Code::io, "ingest: '" + root_dir + "' is not a readable directory");

  Manifest manifest;
  for (const std::string& language : sorted_subdirs(root)) {
    const std::size_t before = manifest.entries.size();
    for (const std::string& session : sorted_subdirs(root / language)) {
      std::vector<std::string> files;
      for (const auto& entry : fs::directory_iterator(root / language / session))
        if (entry.is_regular_file() && has_wav_extension(entry.path()))
          files.push_back(entry.path().filename().string());
      std::sort(files.begin(), files.end());
      for (const std::string& file : files)
        manifest.entries.push_back({(root / language / session / file).string(), language,
                                    speaker_rule(session), Split::none});
    }
    if (manifest.entries.size() == before && warnings)
      warnings->push_back("language '" + language + "' has no clips and was omitted");
  }
  manifest.rebuild_labels();
  return manifest;
}

Manifest split_manifest(const Manifest& manifest, Index train_per_lang, Index val_per_lang,
                        std::uint64_t seed) {
  if (train_per_lang < 0 || val_per_lang < 0 || train_per_lang + val_per_lang == 0)
    throw Error(Error::Code::bad_argument,
                "split_manifest: counts must be non-negative and not both zero");

  // Assignment per entry index; entries stay in manifest order in the output.
  std::vector<Split> assigned(manifest.entries.size(), Split::none);

  for (std::size_t lang_idx = 0; lang_idx < manifest.labels.size(); ++lang_idx) {
    const std::string& language = manifest.labels[lang_idx];

    // Group this language's entries by speaker, preserving manifest order.
    std::map<std::string, std::vector<std::size_t>> by_speaker;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
      if (manifest.entries[i].language == language)
        by_speaker[manifest.entries[i].speaker_id].push_back(i);

    std::vector<std::string> speakers;
    for (const auto& [speaker, idx] : by_speaker) speakers.push_back(speaker);
    Rng rng(mix_seed(seed, std::uint64_t(lang_idx)));
    rng.shuffle(speakers);

    std::size_t next_speaker = 0;
    const auto take = [&](Split split, Index want) {
      Index got = 0;
      while (got < want) {
        if (next_speaker == speakers.size())
          throw Error(Error::Code::split_infeasible,
                      "split_manifest: language '" + language + "' cannot fill the " +
                          to_string(split) + " split with " + std::to_string(want) +
                          " clips from disjoint speakers (" + std::to_string(got) +
                          " available)");
        const auto& clip_indices = by_speaker.at(speakers[next_speaker++]);
        for (const std::size_t i : clip_indices) {
          if (got == want) break;  // truncate the speaker crossing the target
          assigned[i] = split;
          ++got;
        }
      }
    };
    take(Split::val, val_per_lang);
    take(Split::train, train_per_lang);
  }

  Manifest out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (assigned[i] != Split::none) {
      out.entries.push_back(manifest.entries[i]);
      out.entries.back().split = assigned[i];
    }
  out.rebuild_labels();
  return out;
}

namespace {

void check_csv_field(const std::string& field, const std::string& what) {
  if (field.find_first_of(",\n\r") != std::string::npos)
    throw Error(Error::Code::manifest,
                "manifest " + what + " '" + field + "' contains a comma or line break");
}

}  // namespace

void save_manifest(const Manifest& manifest, const std::string& path) {
  std::string csv = "path,language,speaker_id,split\n";
  for (const auto& entry : manifest.entries) {
    check_csv_field(entry.path, "path");
    check_csv_field(entry.language, "language");
    check_csv_field(entry.speaker_id, "speaker_id");
    csv += entry.path + "," + entry.language + "," + entry.speaker_id + "," +
           to_string(entry.split) + "\n";
  }
  write_file_atomic(path, csv);
}

Manifest load_manifest(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  std::string text(bytes.begin(), bytes.end());

  Manifest manifest;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    if (line_no == 1) {
      if (line != "path,language,speaker_id,split")
        throw Error(Error::Code::manifest,
                    path + ": expected header 'path,language,speaker_id,split', got '" + line +
                        "'");
      continue;
    }

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 4)
      throw Error(Error::Code::manifest, path + " line " + std::to_string(line_no) + ": expected 4 fields, got " +
                                             std::to_string(fields.size()));
    if (fields[0].empty())
      throw Error(Error::Code::manifest, path + " line " + std::to_string(line_no) + ": empty path");
    manifest.entries.push_back({fields[0], fields[1], fields[2], split_from_string(fields[3])});
  }
  manifest.rebuild_labels();
  return manifest;
}

BatchStream::BatchStream(const Manifest& manifest, Split split, const SpectrogramConfig& config,
                         const AugmentPolicy* augment_policy, Index batch_size,
                         std::uint64_t epoch_seed, Index clip_len_samples)
    : config_(config), batch_size_(batch_size), clip_len_(clip_len_samples) {
  config_.validate();
  if (split == Split::none)
    throw Error(Error::Code::bad_argument, "BatchStream: split must be train or val");
  if (batch_size_ < 1)
    throw Error(Error::Code::bad_argument, "BatchStream: batch size must be positive");
  if (clip_len_ < config_.n_fft)
    throw Error(Error::Code::bad_argument,
                "BatchStream: clip length shorter than one analysis window");
  if (augment_policy) augment_policy->validate();

  std::vector<const ManifestEntry*> selected;
  for (const auto& entry : manifest.entries)
    if (entry.split == split) selected.push_back(&entry);
  if (split == Split::train) {
    Rng rng(epoch_seed);
    rng.shuffle(selected);
  }

  // Augmentation applies to training batches only.
  augment_enabled_ = augment_policy != nullptr && split == Split::train &&
                     augment_policy->enabled();
  if (augment_enabled_) augment_ = *augment_policy;

  entries_.reserve(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i)
    entries_.push_back({selected[i]->path, manifest.label_index(selected[i]->language),
                        mix_seed(epoch_seed, std::uint64_t(i))});
}

Index BatchStream::n_batches() const {
  return (n_entries() + batch_size_ - 1) / batch_size_;
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ == entries_.size()) return std::nullopt;

  const Index H = config_.image_height_px;
  const Index W = config_.image_width_px;
  Batch batch;
  batch.images = Tensor<float>({batch_size_, 1, H, W});
  Index filled = 0;

  while (filled < batch_size_ && cursor_ != entries_.size()) {
    const std::size_t want = std::size_t(batch_size_ - filled);
    const std::size_t chunk = std::min(want, entries_.size() - cursor_);
    const std::size_t base = cursor_;
    cursor_ += chunk;

    // Decode and render the chunk in parallel; each clip is independent and
    // writes only its own slot, so any thread count gives identical output.
    std::vector<Eigen::MatrixXf> images(chunk);
    std::vector<std::string> failures(chunk);
    parallel_for(Index(chunk), [&](Index j) {
      const Item& item = entries_[base + std::size_t(j)];
      // Only per-clip data problems (unreadable file, bad container, short
      // clip) count as skips; failures past this point are systematic and
      // propagate out of the epoch.
      AudioClip clip;
      try {
        clip = decode_wav(read_file(item.path));
        if (clip.sample_rate_hz != config_.sample_rate_hz)
          clip = resample(clip, config_.sample_rate_hz);
        if (Index(clip.samples.size()) < clip_len_)
          throw Error(Error::Code::bad_argument,
                      "clip has " + std::to_string(clip.samples.size()) + " samples, need " +
                          std::to_string(clip_len_));
      } catch (const Error& e) {
        failures[std::size_t(j)] = e.what();
        if (failures[std::size_t(j)].empty()) failures[std::size_t(j)] = "unknown error";
        return;
      }
      Spectrogram spec = melspectrogram(
          std::span<const float>(clip.samples.data(), std::size_t(clip_len_)), config_);
      if (augment_enabled_) spec = augment(spec, augment_, item.augment_seed);
      images[std::size_t(j)] = render_image(spec);
    });

    for (std::size_t j = 0; j < chunk; ++j) {
      const Item& item = entries_[base + j];
      if (!failures[j].empty()) {
        ++skipped_;
        warnings_.push_back("skipped " + item.path + ": " + failures[j]);
        if (skipped_ * 100 > n_entries())
          throw Error(Error::Code::dataset_budget,
                      "more than 1% of clips unreadable (" + std::to_string(skipped_) + " of " +
                          std::to_string(n_entries()) + "); last: " + warnings_.back());
        continue;
      }
      const Eigen::MatrixXf& img = images[j];
      float* slot = batch.images.data() + filled * H * W;
      for (Index r = 0; r < H; ++r)
        for (Index c = 0; c < W; ++c) slot[r * W + c] = img(r, c);
      batch.labels.push_back(item.label);
      ++filled;
    }
  }

  if (filled == 0) return std::nullopt;
  if (filled < batch_size_) {
    Tensor<float> trimmed({filled, 1, H, W});
    std::copy_n(batch.images.data(), std::size_t(filled * H * W), trimmed.data());
    batch.images = std::move(trimmed);
  }
  return batch;
}

}  // namespace lifas
