#include "lifas/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <set>

#include "lifas/audio.hpp"
#include "lifas/common.hpp"

namespace fs = std::filesystem;

namespace lifas {

void SyntheticTaskSpec::validate() const {
  if (classes.size() < 2)
    throw Error(Error::Code::config, "synth spec: need at least 2 classes");
  if (train_clips_per_class < 1 || val_clips_per_class < 0)
    throw Error(Error::Code::config, "synth spec: clip counts must be positive");
  if (n_speakers_per_class < 2)
    throw Error(Error::Code::config,
                "synth spec: need at least 2 speakers per class for disjoint splits");
  if (clip_len_samples < 2 || sample_rate_hz < 1)
    throw Error(Error::Code::config, "synth spec: clip length and sample rate must be positive");

  const double nyquist = sample_rate_hz / 2.0;
  const double grid_hz = double(sample_rate_hz) / double(clip_len_samples);
  std::set<std::string> names;
  for (const auto& cls : classes) {
    if (cls.name.empty() || cls.name.find_first_of("/\\,\n\r") != std::string::npos)
      throw Error(Error::Code::config, "synth spec: class name '" + cls.name +
                                           "' is empty or not directory-safe");
    if (!names.insert(cls.name).second)
      throw Error(Error::Code::config, "synth spec: duplicate class name '" + cls.name + "'");
    if (!(cls.band_lo_hz > 0.0) || !(cls.band_hi_hz < nyquist) ||
        !(cls.band_lo_hz < cls.band_hi_hz))
      throw Error(Error::Code::config, "synth spec: class '" + cls.name +
                                           "' band must satisfy 0 < lo < hi < Nyquist");
    if (!(cls.am_rate_hz >= 0.0) || cls.am_rate_hz >= nyquist)
      throw Error(Error::Code::config,
                  "synth spec: class '" + cls.name + "' AM rate out of range");
    // The band must leave room for carriers after the AM sidebands and a
    // one-bin guard on each side.
    const double margin = cls.am_rate_hz + 2.0 * grid_hz;
    if (cls.band_hi_hz - cls.band_lo_hz <= 2.0 * margin)
      throw Error(Error::Code::config, "synth spec: class '" + cls.name +
                                           "' band too narrow for its AM rate");
  }
  for (std::size_t a = 0; a < classes.size(); ++a)
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      const bool same_band = classes[a].band_lo_hz == classes[b].band_lo_hz &&
                             classes[a].band_hi_hz == classes[b].band_hi_hz;
      const bool same_am = classes[a].am_rate_hz == classes[b].am_rate_hz;
      if (same_band && same_am)
        throw Error(Error::Code::config, "synth spec: classes '" + classes[a].name + "' and '" +
                                             classes[b].name +
                                             "' are identical in band and AM rate");
    }
}

std::vector<float> synth_clip(const SynthClass& cls, Index clip_len_samples, int sample_rate_hz,
                              std::uint64_t seed) {
  const Index n = clip_len_samples;
  const double fs = sample_rate_hz;
  const double grid_hz = fs / double(n);

  // AM rate snapped to the DFT grid so the modulation sidebands stay on-grid
  // (and therefore strictly inside the band).
  const Index am_bins = Index(std::llround(cls.am_rate_hz / grid_hz));
  const double margin_hz = double(am_bins) * grid_hz + grid_hz;
  const Index lo_bin = Index(std::ceil((cls.band_lo_hz + margin_hz) / grid_hz));
  const Index hi_bin = Index(std::floor((cls.band_hi_hz - margin_hz) / grid_hz));
  if (hi_bin < lo_bin)
    throw Error(Error::Code::config,
                "synth_clip: class '" + cls.name + "' band too narrow for its AM rate");

  // Random subset of carrier bins; each carries a complex-gaussian weight,
  // i.e. white noise restricted to those DFT bins.
  constexpr Index kMaxCarriers = 96;
  const Index available = hi_bin - lo_bin + 1;
  const Index n_carriers = std::min(kMaxCarriers, available);
  Rng rng(seed);
  std::vector<Index> bins(static_cast<std::size_t>(available));
  for (Index i = 0; i < available; ++i) bins[std::size_t(i)] = lo_bin + i;
  rng.shuffle(bins);
  bins.resize(std::size_t(n_carriers));

  std::vector<double> x(std::size_t(n), 0.0);
  for (const Index bin : bins) {
    const double a = rng.normal();
    const double b = rng.normal();
    // cos/sin over the clip via a stable rotation recurrence.
    const double step = 2.0 * std::numbers::pi * double(bin) / double(n);
    const double cs = std::cos(step), sn = std::sin(step);
    double c = 1.0, s = 0.0;
    for (Index t = 0; t < n; ++t) {
      x[std::size_t(t)] += a * c + b * s;
      const double c_next = c * cs - s * sn;
      s = s * cs + c * sn;
      c = c_next;
    }
  }

  // Sinusoidal amplitude modulation with random phase, depth 0.8.
  if (am_bins > 0) {
    constexpr double kDepth = 0.8;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double step = 2.0 * std::numbers::pi * double(am_bins) / double(n);
    const double cs = std::cos(step), sn = std::sin(step);
    double c = std::cos(phase), s = std::sin(phase);
    for (Index t = 0; t < n; ++t) {
      x[std::size_t(t)] *= 1.0 + kDepth * s;
      const double c_next = c * cs - s * sn;
      s = s * cs + c * sn;
      c = c_next;
    }
  }

  double peak = 0.0;
  for (const double v : x) peak = std::max(peak, std::abs(v));
  const double scale = peak > 0.0 ? 0.5 / peak : 0.0;
  std::vector<float> samples(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) samples[std::size_t(t)] = float(x[std::size_t(t)] * scale);
  return samples;
}

Manifest synth_corpus(const SyntheticTaskSpec& spec, const std::string& out_dir) {
  spec.validate();
  const Index per_class = spec.train_clips_per_class + spec.val_clips_per_class;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(Error::Code::io, "synth_corpus: cannot create '" + out_dir + "'");

  Manifest manifest;
  struct Job {
    std::string path;
    std::size_t class_idx;
    Index clip_idx;
  };
  std::vector<Job> jobs;

  char buf[64];
  for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
    const SynthClass& cls = spec.classes[ci];
    for (Index j = 0; j < per_class; ++j) {
      const Index speaker = j % spec.n_speakers_per_class;
      std::snprintf(buf, sizeof buf, "spk%03lld-a", static_cast<long long>(speaker));
      const std::string session(buf);
      std::snprintf(buf, sizeof buf, "clip%04lld.wav", static_cast<long long>(j));
      const fs::path dir = fs::path(out_dir) / cls.name / session;
      fs::create_directories(dir, ec);
      if (ec)
        throw Error(Error::Code::io, "synth_corpus: cannot create '" + dir.string() + "'");
      const std::string path = (dir / buf).string();
      jobs.push_back({path, ci, j});
      manifest.entries.push_back(
          {path, cls.name, voxforge_speaker(session), Split::none});
    }
  }

  // Clips are independent; the per-clip seed fixes every byte of the corpus.
  parallel_for(Index(jobs.size()), [&](Index i) {
    const Job& job = jobs[std::size_t(i)];
    AudioClip clip;
    clip.samples = synth_clip(spec.classes[job.class_idx], spec.clip_len_samples,
                              spec.sample_rate_hz,
                              mix_seed(mix_seed(spec.seed, job.class_idx), std::uint64_t(job.clip_idx)));
    clip.sample_rate_hz = spec.sample_rate_hz;
    const std::vector<std::uint8_t> bytes = encode_wav(clip);
    write_file_atomic(job.path, bytes.data(), bytes.size());
  });

  manifest.rebuild_labels();
  save_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());
  return manifest;
}

}  // namespace lifas
