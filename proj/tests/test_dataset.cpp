#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "lifas/dataset.hpp"

using namespace lifas;
namespace fs = std::filesystem;

namespace {

// root/<language>/<session>/<file> tree of tiny sine WAVs.
struct TreeFixture {
  testutil::TempDir dir{"tree"};

  void add_wav(const std::string& language, const std::string& session, const std::string& file,
               int n_samples = 64) {
    const fs::path d = dir.path / language / session;
    fs::create_directories(d);
    testutil::write_sine_wav(d / file, n_samples, 440.0);
  }

  void add_raw(const std::string& language, const std::string& session, const std::string& file,
               const std::string& bytes) {
    const fs::path d = dir.path / language / session;
    fs::create_directories(d);
    write_file_atomic(d / file, bytes);
  }
};

// Manifest of generated WAVs, all assigned to one split.
struct StreamFixture {
  testutil::TempDir dir{"stream"};
  Manifest manifest;
  SpectrogramConfig config = testutil::tiny_spectro();

  void add_clips(const std::string& language, int count, int n_samples = 600) {
    fs::create_directories(dir.path);
    for (int i = 0; i < count; ++i) {
      const fs::path p =
          dir.path / (language + "_" + std::to_string(manifest.entries.size()) + ".wav");
      testutil::write_sine_wav(p, n_samples, language == "aa" ? 500.0 : 3000.0);
      manifest.entries.push_back({p.string(), language, "spk0", Split::train});
    }
    manifest.rebuild_labels();
  }

  void add_corrupt(const std::string& language) {
    const fs::path p = dir.path / ("bad_" + std::to_string(manifest.entries.size()) + ".wav");
    write_file_atomic(p, "this is not a RIFF container");
    manifest.entries.push_back({p.string(), language, "spk0", Split::train});
    manifest.rebuild_labels();
  }
};

std::vector<Batch> drain(BatchStream& stream) {
  std::vector<Batch> batches;
  while (auto batch = stream.next()) batches.push_back(std::move(*batch));
  return batches;
}

}  // namespace

TEST_CASE("split names round trip and reject junk") {
  CHECK(to_string(Split::none) == "none");
  CHECK(split_from_string("train") == Split::train);
  CHECK(split_from_string("val") == Split::val);
  CHECK_THROWS_AS(split_from_string("validation"), Error);
}

TEST_CASE("voxforge speaker rule takes the text before the first dash") {
  CHECK(voxforge_speaker("anonymous-20100515-xyz") == "anonymous");
  CHECK(voxforge_speaker("spk003-b") == "spk003");
  CHECK(voxforge_speaker("nodash") == "nodash");
}

TEST_CASE("ingest walks the tree sorted and attributes speakers by session") {
  TreeFixture fx;
  fx.add_wav("english", "alice-20100101-a", "clip2.wav");
  fx.add_wav("english", "alice-20100101-a", "clip1.wav");
  fx.add_wav("english", "alice-20100202-b", "clip1.wav");  // same speaker, new session
  fx.add_wav("english", "bob-20100101-a", "clip1.WAV");    // extension case-insensitive
  fx.add_wav("german", "carol-20100101-a", "clip1.wav");
  fx.add_raw("german", "carol-20100101-a", "notes.txt", "not audio");  // ignored

  const Manifest m = ingest(fx.dir.path.string());
  REQUIRE(m.entries.size() == 5);
  CHECK(m.labels == std::vector<std::string>{"english", "german"});

  // Languages, sessions, and files each visited in sorted order.
  CHECK(m.entries[0].path.find("alice-20100101-a/clip1.wav") != std::string::npos);
  CHECK(m.entries[1].path.find("alice-20100101-a/clip2.wav") != std::string::npos);
  CHECK(m.entries[2].speaker_id == "alice");
  CHECK(m.entries[3].speaker_id == "bob");
  CHECK(m.entries[4].language == "german");
  for (const auto& entry : m.entries) CHECK(entry.split == Split::none);

  CHECK(m.label_index("english") == 0);
  CHECK(m.label_index("german") == 1);
  CHECK_THROWS_AS(m.label_index("french"), Error);
}

TEST_CASE("ingest warns about and omits clipless languages") {
  TreeFixture fx;
  fx.add_wav("english", "alice-a", "clip1.wav");
  fs::create_directories(fx.dir.path / "empty_lang");

  std::vector<std::string> warnings;
  const Manifest m = ingest(fx.dir.path.string(), voxforge_speaker, &warnings);
  CHECK(m.entries.size() == 1);
  CHECK(m.labels == std::vector<std::string>{"english"});
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("empty_lang") != std::string::npos);
}

TEST_CASE("ingest rejects a missing root") {
  CHECK_THROWS_AS(ingest("/nonexistent/lifas_root"), Error);
}

TEST_CASE("ingest accepts a custom speaker rule") {
  TreeFixture fx;
  fx.add_wav("english", "sessionX", "clip1.wav");
  const Manifest m =
      ingest(fx.dir.path.string(), [](const std::string& s) { return "fixed_" + s; });
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].speaker_id == "fixed_sessionX");
}

TEST_CASE("split_manifest fills exact counts from disjoint speakers") {
  // 2 languages x 10 speakers x 10 clips.
  Manifest m;
  for (const std::string lang : {"english", "german"})
    for (int s = 0; s < 10; ++s)
      for (int c = 0; c < 10; ++c)
        m.entries.push_back({"/" + lang + "/s" + std::to_string(s) + "/c" + std::to_string(c),
                             lang, "spk" + std::to_string(s), Split::none});
  m.rebuild_labels();

  const Manifest out = split_manifest(m, 60, 20, /*seed=*/5);
  CHECK(out.entries.size() == 160);
  CHECK(out.count(Split::none) == 0);

  for (const std::string lang : {"english", "german"}) {
    Index n_train = 0, n_val = 0;
    std::set<std::string> train_speakers, val_speakers;
    for (const auto& entry : out.entries) {
      if (entry.language != lang) continue;
      if (entry.split == Split::train) {
        ++n_train;
        train_speakers.insert(entry.speaker_id);
      } else {
        ++n_val;
        val_speakers.insert(entry.speaker_id);
      }
    }
    CHECK(n_train == 60);
    CHECK(n_val == 20);
    for (const auto& speaker : val_speakers) CHECK(train_speakers.count(speaker) == 0);
  }

  // Output preserves the input entry order.
  std::size_t last_pos = 0;
  bool ordered = true;
  for (const auto& entry : out.entries) {
    std::size_t pos = 0;
    for (; pos < m.entries.size(); ++pos)
      if (m.entries[pos].path == entry.path) break;
    if (pos < last_pos) ordered = false;
    last_pos = pos;
  }
  CHECK(ordered);
}

TEST_CASE("split_manifest truncates the speaker that crosses the target") {
  // One language, 4 speakers x 3 clips; val 4 needs one whole speaker + one clip.
  Manifest m;
  for (int s = 0; s < 4; ++s)
    for (int c = 0; c < 3; ++c)
      m.entries.push_back({"/x/s" + std::to_string(s) + "/c" + std::to_string(c), "x",
                           "spk" + std::to_string(s), Split::none});
  m.rebuild_labels();

  const Manifest out = split_manifest(m, 6, 4, /*seed=*/0);
  CHECK(out.count(Split::val) == 4);
  CHECK(out.count(Split::train) == 6);

  std::set<std::string> train_speakers, val_speakers;
  for (const auto& entry : out.entries)
    (entry.split == Split::train ? train_speakers : val_speakers).insert(entry.speaker_id);
  CHECK(val_speakers.size() == 2);   // one full + one truncated
  CHECK(train_speakers.size() == 2);  // exactly the remaining speakers
  for (const auto& speaker : val_speakers) CHECK(train_speakers.count(speaker) == 0);
}

TEST_CASE("split_manifest errors name the language that cannot be filled") {
  Manifest m;
  for (int c = 0; c < 10; ++c)
    m.entries.push_back({"/only/c" + std::to_string(c), "lonely", "solo", Split::none});
  m.rebuild_labels();

  CHECK_THROWS_WITH_AS(split_manifest(m, 5, 5, 0), doctest::Contains("lonely"), Error);
  CHECK_THROWS_AS(split_manifest(m, 0, 0, 0), Error);
  CHECK_THROWS_AS(split_manifest(m, -1, 2, 0), Error);
  CHECK_NOTHROW(split_manifest(m, 5, 0, 0));  // single-split requests are fine
}

TEST_CASE("split_manifest is seed-deterministic") {
  Manifest m;
  for (int s = 0; s < 10; ++s)
    for (int c = 0; c < 4; ++c)
      m.entries.push_back({"/x/s" + std::to_string(s) + "/c" + std::to_string(c), "x",
                           "spk" + std::to_string(s), Split::none});
  m.rebuild_labels();

  const auto signature = [](const Manifest& out) {
    std::string s;
    for (const auto& entry : out.entries) s += entry.path + "=" + to_string(entry.split) + ";";
    return s;
  };
  CHECK(signature(split_manifest(m, 12, 8, 42)) == signature(split_manifest(m, 12, 8, 42)));

  const std::string base = signature(split_manifest(m, 12, 8, 0));
  bool any_different = false;
  for (std::uint64_t seed : {1ull, 2ull, 3ull})
    any_different = any_different || signature(split_manifest(m, 12, 8, seed)) != base;
  CHECK(any_different);
}

TEST_CASE("manifest CSV round trips") {
  testutil::TempDir dir("manifest");
  Manifest m;
  m.entries.push_back({"/data/english/a/c1.wav", "english", "alice", Split::train});
  m.entries.push_back({"/data/german/b/c2.wav", "german", "bob", Split::val});
  m.entries.push_back({"/data/german/b/c3.wav", "german", "bob", Split::none});
  m.rebuild_labels();

  const std::string path = (dir / "m.csv").string();
  save_manifest(m, path);
  const Manifest loaded = load_manifest(path);
  REQUIRE(loaded.entries.size() == 3);
  CHECK(loaded.labels == m.labels);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(loaded.entries[i].path == m.entries[i].path);
    CHECK(loaded.entries[i].language == m.entries[i].language);
    CHECK(loaded.entries[i].speaker_id == m.entries[i].speaker_id);
    CHECK(loaded.entries[i].split == m.entries[i].split);
  }
}

TEST_CASE("manifest CSV loader accepts CRLF line endings") {
  testutil::TempDir dir("crlf");
  const std::string path = (dir / "m.csv").string();
  write_file_atomic(path,
                    "path,language,speaker_id,split\r\n/a.wav,english,alice,train\r\n");
  const Manifest m = load_manifest(path);
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].language == "english");
  CHECK(m.entries[0].split == Split::train);
}

TEST_CASE("manifest CSV loader rejects malformed input with line numbers") {
  testutil::TempDir dir("badcsv");
  const auto load_text = [&](const std::string& text) {
    const std::string path = (dir / "bad.csv").string();
    write_file_atomic(path, text);
    return load_manifest(path);
  };

  CHECK_THROWS_WITH_AS(load_text("wrong,header\n"), doctest::Contains("header"), Error);
  CHECK_THROWS_WITH_AS(load_text("path,language,speaker_id,split\n/a.wav,english,alice\n"),
                       doctest::Contains("line 2"), Error);
  CHECK_THROWS_WITH_AS(
      load_text("path,language,speaker_id,split\n/a.wav,english,alice,holdout\n"),
      doctest::Contains("holdout"), Error);
  CHECK_THROWS_WITH_AS(load_text("path,language,speaker_id,split\n,english,alice,train\n"),
                       doctest::Contains("empty path"), Error);
  CHECK_THROWS_AS(load_manifest((dir / "missing.csv").string()), Error);
}

TEST_CASE("save_manifest rejects fields that would corrupt the CSV") {
  testutil::TempDir dir("badfield");
  Manifest m;
  m.entries.push_back({"/a.wav", "eng,lish", "alice", Split::train});
  m.rebuild_labels();
  CHECK_THROWS_AS(save_manifest(m, (dir / "m.csv").string()), Error);
}

TEST_CASE("BatchStream yields full batches with one smaller tail") {
  StreamFixture fx;
  fx.add_clips("aa", 65);
  fx.add_clips("bb", 65);  // 130 entries

  BatchStream stream(fx.manifest, Split::train, fx.config, nullptr, 64, /*epoch_seed=*/1, 512);
  CHECK(stream.n_entries() == 130);
  CHECK(stream.n_batches() == 3);

  const std::vector<Batch> batches = drain(stream);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].images.dim(0) == 64);
  CHECK(batches[1].images.dim(0) == 64);
  CHECK(batches[2].images.dim(0) == 2);
  for (const Batch& batch : batches) {
    CHECK(batch.images.dim(1) == 1);
    CHECK(batch.images.dim(2) == fx.config.image_height_px);
    CHECK(batch.images.dim(3) == fx.config.image_width_px);
    CHECK(Index(batch.labels.size()) == batch.images.dim(0));
    for (const Index label : batch.labels) {
      CHECK(label >= 0);
      CHECK(label < 2);
    }
    for (const float v : batch.images.values) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("BatchStream train order is shuffled per epoch seed, val order fixed") {
  StreamFixture fx;
  fx.add_clips("aa", 20);
  fx.add_clips("bb", 20);

  const auto labels_of = [&](Split split, std::uint64_t seed) {
    BatchStream stream(fx.manifest, split, fx.config, nullptr, 8, seed, 512);
    std::vector<Index> labels;
    while (auto batch = stream.next())
      labels.insert(labels.end(), batch->labels.begin(), batch->labels.end());
    return labels;
  };

  CHECK(labels_of(Split::train, 1) == labels_of(Split::train, 1));
  CHECK(labels_of(Split::train, 1) != labels_of(Split::train, 2));

  Manifest val = fx.manifest;
  for (auto& entry : val.entries) entry.split = Split::val;
  BatchStream v1(val, Split::val, fx.config, nullptr, 8, 1, 512);
  BatchStream v2(val, Split::val, fx.config, nullptr, 8, 99, 512);
  while (true) {
    auto b1 = v1.next();
    auto b2 = v2.next();
    CHECK(b1.has_value() == b2.has_value());
    if (!b1) break;
    CHECK(b1->labels == b2->labels);
    CHECK(b1->images.values == b2->images.values);
  }
}

TEST_CASE("BatchStream with equal seeds is bit-identical") {
  StreamFixture fx;
  fx.add_clips("aa", 13);
  fx.add_clips("bb", 13);

  for (int threads : {1, 4}) {
    set_thread_limit(threads);
    BatchStream s1(fx.manifest, Split::train, fx.config, nullptr, 8, 7, 512);
    set_thread_limit(threads == 1 ? 4 : 1);  // decode threading must not matter
    BatchStream s2(fx.manifest, Split::train, fx.config, nullptr, 8, 7, 512);
    while (true) {
      auto b1 = s1.next();
      auto b2 = s2.next();
      REQUIRE(b1.has_value() == b2.has_value());
      if (!b1) break;
      CHECK(b1->labels == b2->labels);
      CHECK(b1->images.values == b2->images.values);
    }
  }
  set_thread_limit(0);
}

TEST_CASE("BatchStream skips unreadable and short clips, compacting batches") {
  StreamFixture fx;
  fx.add_clips("aa", 199);  // 201 entries total: the 1% budget tolerates 2 skips
  fx.add_corrupt("aa");
  fx.add_clips("aa", 1, /*n_samples=*/300);  // shorter than the 512-sample window

  BatchStream stream(fx.manifest, Split::train, fx.config, nullptr, 16, 3, 512);
  CHECK(stream.n_entries() == 201);
  const std::vector<Batch> batches = drain(stream);
  CHECK(stream.skipped() == 2);
  CHECK(stream.warnings().size() == 2);

  Index total = 0;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    total += batches[i].images.dim(0);
    if (i + 1 < batches.size()) CHECK(batches[i].images.dim(0) == 16);
  }
  CHECK(total == 199);
}

TEST_CASE("BatchStream fails the epoch when more than 1% of clips are bad") {
  StreamFixture fx;
  fx.add_clips("aa", 10);
  fx.add_corrupt("aa");

  BatchStream stream(fx.manifest, Split::train, fx.config, nullptr, 4, 0, 512);
  try {
    drain(stream);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(e.code() == Error::Code::dataset_budget);
  }
}

TEST_CASE("BatchStream constructor validates its arguments") {
  StreamFixture fx;
  fx.add_clips("aa", 4);
  CHECK_THROWS_AS(BatchStream(fx.manifest, Split::none, fx.config, nullptr, 4, 0, 512), Error);
  CHECK_THROWS_AS(BatchStream(fx.manifest, Split::train, fx.config, nullptr, 0, 0, 512), Error);
  CHECK_THROWS_AS(BatchStream(fx.manifest, Split::train, fx.config, nullptr, 4, 0, 100), Error);
  AugmentPolicy bad;
  bad.n_freq_masks = -1;
  CHECK_THROWS_AS(BatchStream(fx.manifest, Split::train, fx.config, &bad, 4, 0, 512), Error);
}

TEST_CASE("BatchStream on an empty split yields nothing") {
  StreamFixture fx;
  fx.add_clips("aa", 4);
  BatchStream stream(fx.manifest, Split::val, fx.config, nullptr, 4, 0, 512);
  CHECK(stream.n_entries() == 0);
  CHECK(!stream.next().has_value());
}

TEST_CASE("BatchStream applies augmentation only to train batches") {
  StreamFixture fx;
  fx.add_clips("aa", 6);
  Manifest both = fx.manifest;
  both.entries[4].split = Split::val;
  both.entries[5].split = Split::val;

  // Sized to the rendered images: 16 mel rows, 3 frames.
  AugmentPolicy policy;
  policy.freq_mask_param = 8;
  policy.n_freq_masks = 2;
  policy.time_mask_param = 2;
  policy.n_time_masks = 1;

  // Train: masking changes the rendered images for some seed.
  BatchStream plain(both, Split::train, fx.config, nullptr, 4, 11, 512);
  BatchStream masked(both, Split::train, fx.config, &policy, 4, 11, 512);
  const auto b_plain = plain.next();
  const auto b_masked = masked.next();
  REQUIRE(b_plain.has_value());
  REQUIRE(b_masked.has_value());
  CHECK(b_plain->labels == b_masked->labels);  // same order, same clips
  CHECK(b_plain->images.values != b_masked->images.values);

  // Val: the policy is ignored entirely.
  BatchStream val_plain(both, Split::val, fx.config, nullptr, 4, 11, 512);
  BatchStream val_masked(both, Split::val, fx.config, &policy, 4, 11, 512);
  CHECK(val_plain.next()->images.values == val_masked.next()->images.values);

  // A policy too large for the images is a systematic error, not a bad clip:
  // it must surface directly instead of eating the skip budget.
  AugmentPolicy oversized = policy;
  oversized.time_mask_param = 10;  // the 512-sample window yields 3 frames
  BatchStream broken(both, Split::train, fx.config, &oversized, 4, 11, 512);
  try {
    broken.next();
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(e.code() != Error::Code::dataset_budget);
    CHECK(std::string(e.what()).find("time_mask") != std::string::npos);
  }
}
