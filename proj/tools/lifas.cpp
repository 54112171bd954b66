#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lifas/audio.hpp"
#include "lifas/checkpoint.hpp"
#include "lifas/common.hpp"
#include "lifas/config.hpp"
#include "lifas/dataset.hpp"
#include "lifas/dsp.hpp"
#include "lifas/eval.hpp"
#include "lifas/model.hpp"
#include "lifas/synth.hpp"
#include "lifas/train.hpp"

namespace fs = std::filesystem;
using namespace lifas;

namespace {

bool given(const CLI::Option* option) { return option != nullptr && option->count() > 0; }

std::string read_text(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

AudioClip load_audio(const std::string& path, int target_rate_hz) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  AudioClip clip = decode_wav(bytes);
  if (clip.sample_rate_hz != target_rate_hz) clip = resample(clip, target_rate_hz);
  return clip;
}

// Binary 8-bit PGM; rows top to bottom, values scaled from [0, 1].
std::string to_pgm(const Eigen::MatrixXf& img) {
  std::string out = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) +
                    "\n255\n";
  out.reserve(out.size() + std::size_t(img.size()));
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const float v = std::clamp(img(r, c), 0.0f, 1.0f);
      out.push_back(char(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  return out;
}

std::string matrix_csv(const Eigen::MatrixXf& m) {
  std::string out;
  char buf[40];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", double(m(r, c)));
      if (c) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  return pipeline_config_from_json(read_text(path));
}

void make_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Error::Code::io, "cannot create '" + dir + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// spectrogram

struct SpectrogramOpts {
  std::string input, out_pgm, out_csv, config_path;
  SpectrogramConfig flags;
  CLI::Option *o_rate = nullptr, *o_nfft = nullptr, *o_hop = nullptr, *o_mels = nullptr,
              *o_fmin = nullptr, *o_fmax = nullptr, *o_power = nullptr, *o_topdb = nullptr,
              *o_width = nullptr, *o_height = nullptr;
};

void run_spectrogram(const SpectrogramOpts& opts) {
  SpectrogramConfig config = load_pipeline_config(opts.config_path).spectrogram;
  if (given(opts.o_rate)) config.sample_rate_hz = opts.flags.sample_rate_hz;
  if (given(opts.o_nfft)) config.n_fft = opts.flags.n_fft;
  if (given(opts.o_hop)) config.hop_samples = opts.flags.hop_samples;
  if (given(opts.o_mels)) config.n_mels = opts.flags.n_mels;
  if (given(opts.o_fmin)) config.fmin_hz = opts.flags.fmin_hz;
  if (given(opts.o_fmax)) config.fmax_hz = opts.flags.fmax_hz;
  if (given(opts.o_power)) config.power_exponent = opts.flags.power_exponent;
  if (given(opts.o_topdb)) config.top_db = opts.flags.top_db;
  if (given(opts.o_width)) config.image_width_px = opts.flags.image_width_px;
  if (given(opts.o_height)) config.image_height_px = opts.flags.image_height_px;
  config.validate();

  const AudioClip clip = load_audio(opts.input, config.sample_rate_hz);
  const Spectrogram spec =
      melspectrogram(std::span<const float>(clip.samples.data(), clip.samples.size()), config);
  std::printf("%lld x %lld\n", static_cast<long long>(spec.values.rows()),
              static_cast<long long>(spec.values.cols()));
  if (!opts.out_csv.empty()) write_file_atomic(opts.out_csv, matrix_csv(spec.values));
  if (!opts.out_pgm.empty()) write_file_atomic(opts.out_pgm, to_pgm(render_image(spec)));
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
  std::string spec_path, out_dir;
};

void run_synth(const SynthOpts& opts) {
  const SyntheticTaskSpec spec = synth_spec_from_json(read_text(opts.spec_path));
  const Manifest manifest = synth_corpus(spec, opts.out_dir);
  std::printf("wrote %lld clips across %zu classes under %s\n",
              static_cast<long long>(manifest.entries.size()), spec.classes.size(),
              opts.out_dir.c_str());
}

// ---------------------------------------------------------------------------
// ingest

struct IngestOpts {
  std::string root, out = "manifest.csv";
};

void run_ingest(const IngestOpts& opts) {
  std::vector<std::string> warnings;
  const Manifest manifest = ingest(opts.root, voxforge_speaker, &warnings);
  for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  save_manifest(manifest, opts.out);
  std::printf("%lld clips across %zu languages -> %s\n",
              static_cast<long long>(manifest.entries.size()), manifest.labels.size(),
              opts.out.c_str());
}

// ---------------------------------------------------------------------------
// split

struct SplitOpts {
  std::string manifest_path, out;
  long long train_per_lang = 0, val_per_lang = 0;
  std::uint64_t seed = 0;
};

void run_split(const SplitOpts& opts) {
  const Manifest manifest = load_manifest(opts.manifest_path);
  const Manifest out =
      split_manifest(manifest, Index(opts.train_per_lang), Index(opts.val_per_lang), opts.seed);
  save_manifest(out, opts.out);
  std::printf("%lld train + %lld val clips across %zu languages -> %s\n",
              static_cast<long long>(out.count(Split::train)),
              static_cast<long long>(out.count(Split::val)), out.labels.size(),
              opts.out.c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string manifest_path, out_dir, config_path, mask_fill;
  int epochs = 0, batch_size = 0;
  double momentum = 0.0, weight_decay = 0.0;
  std::uint64_t seed = 0;
  double max_lr = 0.0, warmup_frac = 0.0, start_div = 0.0, final_div = 0.0;
  long long total_steps = 0, clip_len = 0;
  int freq_mask_param = 0, time_mask_param = 0, n_freq_masks = 0, n_time_masks = 0;
  CLI::Option *o_epochs = nullptr, *o_batch = nullptr, *o_momentum = nullptr, *o_wd = nullptr,
              *o_seed = nullptr, *o_max_lr = nullptr, *o_steps = nullptr, *o_warmup = nullptr,
              *o_start_div = nullptr, *o_final_div = nullptr, *o_clip_len = nullptr,
              *o_fmask = nullptr, *o_tmask = nullptr, *o_nf = nullptr, *o_nt = nullptr,
              *o_fill = nullptr;
};

void run_train(const TrainOpts& opts) {
  const Manifest manifest = load_manifest(opts.manifest_path);
  if (manifest.count(Split::train) < 1)
    throw Error(Error::Code::bad_argument,
                "manifest has no train entries; assign splits first (see the split command)");

  PipelineConfig config;
  bool file_sets_classes = false;
  if (!opts.config_path.empty()) {
    const std::string text = read_text(opts.config_path);
    config = pipeline_config_from_json(text);
    const auto j = nlohmann::json::parse(text);
    file_sets_classes = j.contains("model") && j.at("model").contains("n_classes");
  }

  if (given(opts.o_epochs)) config.train.epochs = opts.epochs;
  if (given(opts.o_batch)) config.train.batch_size = opts.batch_size;
  if (given(opts.o_momentum)) config.train.momentum = opts.momentum;
  if (given(opts.o_wd)) config.train.weight_decay = opts.weight_decay;
  if (given(opts.o_seed)) config.train.seed = opts.seed;
  if (given(opts.o_max_lr)) config.schedule.max_lr = opts.max_lr;
  if (given(opts.o_steps)) config.schedule.total_steps = Index(opts.total_steps);
  if (given(opts.o_warmup)) config.schedule.warmup_frac = opts.warmup_frac;
  if (given(opts.o_start_div)) config.schedule.start_div = opts.start_div;
  if (given(opts.o_final_div)) config.schedule.final_div = opts.final_div;
  if (given(opts.o_clip_len)) config.clip_len_samples = Index(opts.clip_len);
  if (given(opts.o_fmask)) config.augment.freq_mask_param = opts.freq_mask_param;
  if (given(opts.o_tmask)) config.augment.time_mask_param = opts.time_mask_param;
  if (given(opts.o_nf)) config.augment.n_freq_masks = opts.n_freq_masks;
  if (given(opts.o_nt)) config.augment.n_time_masks = opts.n_time_masks;
  if (given(opts.o_fill)) {
    if (opts.mask_fill == "mean")
      config.augment.mask_fill = MaskFill::mean;
    else if (opts.mask_fill == "min")
      config.augment.mask_fill = MaskFill::min;
    else
      throw Error(Error::Code::config,
                  "--mask-fill must be \"mean\" or \"min\", got \"" + opts.mask_fill + "\"");
  }

  const Index n_languages = Index(manifest.labels.size());
  if (file_sets_classes && config.model.n_classes != int(n_languages))
    throw Error(Error::Code::config,
                "config says " + std::to_string(config.model.n_classes) +
                    " classes but the manifest has " + std::to_string(n_languages) +
                    " languages");
  config.model.n_classes = int(n_languages);

  // Pin the realized step count so the emitted config reproduces this run.
  if (config.schedule.total_steps == 0) {
    const Index per_epoch = (manifest.count(Split::train) + config.train.batch_size - 1) /
                            config.train.batch_size;
    config.schedule.total_steps = Index(config.train.epochs) * per_epoch;
  }
  config.validate();

  make_out_dir(opts.out_dir);
  const fs::path out_dir(opts.out_dir);
  write_file_atomic(out_dir / "config.json", to_json_text(config));

  Model<float> model = make_model<float>(config.model);
  init_parameters(model, config.train.seed);

  FitOptions options;
  options.checkpoint_dir = opts.out_dir;
  options.clip_len_samples = config.clip_len_samples;
  const AugmentPolicy* augment = config.augment.enabled() ? &config.augment : nullptr;
  const FitResult result = fit(model, manifest, config.spectrogram, config.train, config.schedule,
                               augment, options);

  write_file_atomic(out_dir / "history_steps.csv", result.history.steps_csv());
  write_file_atomic(out_dir / "history_epochs.csv", result.history.epochs_csv());

  std::printf("trained %d epochs (%zu steps); final loss %.6f\n", config.train.epochs,
              result.history.steps.size(),
              result.history.steps.empty() ? 0.0 : result.history.steps.back().loss);
  if (result.best_epoch >= 0) {
    Model<float> best = load_checkpoint(out_dir / "best.ckpt");
    const EvalResult ev = evaluate(best, manifest, Split::val, config.spectrogram,
                                   config.train.batch_size, config.clip_len_samples);
    write_file_atomic(out_dir / "metrics.json", metrics_json(ev));
    write_file_atomic(out_dir / "confusion.csv", confusion_csv(ev.cm));
    std::printf("best val accuracy %.4f (epoch %lld) on %lld clips\n", ev.accuracy,
                static_cast<long long>(result.best_epoch + 1),
                static_cast<long long>(ev.n_eval));
  }
  std::printf("artifacts in %s\n", opts.out_dir.c_str());
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string checkpoint, manifest_path, split = "val", config_path, out_csv, out_json;
  long long batch_size = 64;
};

void run_eval(const EvalOpts& opts) {
  Model<float> model = load_checkpoint(opts.checkpoint);
  const Manifest manifest = load_manifest(opts.manifest_path);
  const PipelineConfig config = load_pipeline_config(opts.config_path);
  const EvalResult result = evaluate(model, manifest, split_from_string(opts.split),
                                     config.spectrogram, Index(opts.batch_size),
                                     config.clip_len_samples);
  std::printf("accuracy %.4f on %lld clips\n%s", result.accuracy,
              static_cast<long long>(result.n_eval), confusion_text(result.cm).c_str());
  if (!opts.out_csv.empty()) write_file_atomic(opts.out_csv, confusion_csv(result.cm));
  if (!opts.out_json.empty()) write_file_atomic(opts.out_json, metrics_json(result));
}

// ---------------------------------------------------------------------------
// predict

struct PredictOpts {
  std::string checkpoint, manifest_path, config_path;
  std::vector<std::string> wavs;
};

void run_predict(const PredictOpts& opts) {
  Model<float> model = load_checkpoint(opts.checkpoint);
  const PipelineConfig config = load_pipeline_config(opts.config_path);
  const int k = model.spec.n_classes;

  std::vector<std::string> names;
  if (!opts.manifest_path.empty()) {
    names = load_manifest(opts.manifest_path).labels;
    if (Index(names.size()) != k)
      throw Error(Error::Code::bad_argument,
                  "checkpoint has " + std::to_string(k) + " classes but the manifest has " +
                      std::to_string(names.size()) + " languages");
  } else {
    for (int i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
  }

  for (const std::string& path : opts.wavs) {
    const AudioClip clip = load_audio(path, config.spectrogram.sample_rate_hz);
    if (Index(clip.samples.size()) < config.clip_len_samples)
      throw Error(Error::Code::bad_argument,
                  path + ": clip has " + std::to_string(clip.samples.size()) +
                      " samples, need " + std::to_string(config.clip_len_samples));
    const Spectrogram spec = melspectrogram(
        std::span<const float>(clip.samples.data(), std::size_t(config.clip_len_samples)),
        config.spectrogram);
    const Eigen::MatrixXf img = render_image(spec);

    Tensor<float> x({1, 1, Index(img.rows()), Index(img.cols())});
    for (Eigen::Index r = 0; r < img.rows(); ++r)
      for (Eigen::Index c = 0; c < img.cols(); ++c)
        x.values[std::size_t(r * img.cols() + c)] = img(r, c);

    const Tensor<float> logits = model_forward<float>(model, x, Mode::eval, nullptr);
    const std::vector<double> probs = softmax_probabilities(logits)[0];
    int best = 0;
    for (int i = 1; i < k; ++i)
      if (probs[std::size_t(i)] > probs[std::size_t(best)]) best = i;

    std::string line = path + ": " + names[std::size_t(best)] + " ";
    char buf[64];
    for (int i = 0; i < k; ++i) {
      std::snprintf(buf, sizeof buf, " %s=%.4f", names[std::size_t(i)].c_str(),
                    probs[std::size_t(i)]);
      line += buf;
    }
    std::printf("%s\n", line.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language identification from audio spectrograms"};
  app.require_subcommand(1);
  app.add_flag_callback(
      "--single-threaded", [] { set_thread_limit(1); },
      "run everything on one thread for bitwise reproducibility");

  SpectrogramOpts sg;
  auto* c_sg = app.add_subcommand("spectrogram", "render a WAV file as a mel spectrogram");
  c_sg->fallthrough();
  c_sg->add_option("input", sg.input, "input WAV file")->required();
  c_sg->add_option("--config", sg.config_path, "pipeline config JSON");
  c_sg->add_option("--out-pgm", sg.out_pgm, "write the rendered image as binary PGM");
  c_sg->add_option("--out-csv", sg.out_csv, "write the mel matrix (dB) as CSV");
  sg.o_rate = c_sg->add_option("--sample-rate-hz", sg.flags.sample_rate_hz);
  sg.o_nfft = c_sg->add_option("--n-fft", sg.flags.n_fft);
  sg.o_hop = c_sg->add_option("--hop-samples", sg.flags.hop_samples);
  sg.o_mels = c_sg->add_option("--n-mels", sg.flags.n_mels);
  sg.o_fmin = c_sg->add_option("--fmin-hz", sg.flags.fmin_hz);
  sg.o_fmax = c_sg->add_option("--fmax-hz", sg.flags.fmax_hz);
  sg.o_power = c_sg->add_option("--power-exponent", sg.flags.power_exponent);
  sg.o_topdb = c_sg->add_option("--top-db", sg.flags.top_db);
  sg.o_width = c_sg->add_option("--image-width-px", sg.flags.image_width_px);
  sg.o_height = c_sg->add_option("--image-height-px", sg.flags.image_height_px);
  c_sg->callback([&] { run_spectrogram(sg); });

  SynthOpts sy;
  auto* c_sy = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  c_sy->fallthrough();
  c_sy->add_option("spec", sy.spec_path, "task spec JSON")->required();
  c_sy->add_option("out_dir", sy.out_dir, "output corpus directory")->required();
  c_sy->callback([&] { run_synth(sy); });

  IngestOpts ig;
  auto* c_ig = app.add_subcommand("ingest", "scan a corpus tree into a manifest");
  c_ig->fallthrough();
  c_ig->add_option("root", ig.root, "corpus root: root/<language>/<speaker_session>/*.wav")
      ->required();
  c_ig->add_option("--out", ig.out, "manifest CSV path (default manifest.csv)");
  c_ig->callback([&] { run_ingest(ig); });

  SplitOpts sp;
  auto* c_sp = app.add_subcommand("split", "assign speaker-disjoint train/val splits");
  c_sp->fallthrough();
  c_sp->add_option("--manifest", sp.manifest_path, "input manifest CSV")->required();
  c_sp->add_option("--train-per-lang", sp.train_per_lang, "train clips per language")->required();
  c_sp->add_option("--val-per-lang", sp.val_per_lang, "val clips per language")->required();
  c_sp->add_option("--seed", sp.seed, "shuffle seed");
  c_sp->add_option("--out", sp.out, "output manifest CSV")->required();
  c_sp->callback([&] { run_split(sp); });

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "train a model on a split manifest");
  c_tr->fallthrough();
  c_tr->add_option("--manifest", tr.manifest_path, "split manifest CSV")->required();
  c_tr->add_option("--out-dir", tr.out_dir, "directory for checkpoints and logs")->required();
  c_tr->add_option("--config", tr.config_path, "pipeline config JSON (flags win)");
  tr.o_epochs = c_tr->add_option("--epochs", tr.epochs);
  tr.o_batch = c_tr->add_option("--batch-size", tr.batch_size);
  tr.o_momentum = c_tr->add_option("--momentum", tr.momentum);
  tr.o_wd = c_tr->add_option("--weight-decay", tr.weight_decay);
  tr.o_seed = c_tr->add_option("--seed", tr.seed);
  tr.o_max_lr = c_tr->add_option("--max-lr", tr.max_lr);
  tr.o_steps = c_tr->add_option("--total-steps", tr.total_steps);
  tr.o_warmup = c_tr->add_option("--warmup-frac", tr.warmup_frac);
  tr.o_start_div = c_tr->add_option("--start-div", tr.start_div);
  tr.o_final_div = c_tr->add_option("--final-div", tr.final_div);
  tr.o_clip_len = c_tr->add_option("--clip-len-samples", tr.clip_len);
  tr.o_fmask = c_tr->add_option("--freq-mask-param", tr.freq_mask_param);
  tr.o_tmask = c_tr->add_option("--time-mask-param", tr.time_mask_param);
  tr.o_nf = c_tr->add_option("--n-freq-masks", tr.n_freq_masks);
  tr.o_nt = c_tr->add_option("--n-time-masks", tr.n_time_masks);
  tr.o_fill = c_tr->add_option("--mask-fill", tr.mask_fill, "mean or min");
  c_tr->callback([&] { run_train(tr); });

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  c_ev->fallthrough();
  c_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  c_ev->add_option("--manifest", ev.manifest_path, "split manifest CSV")->required();
  c_ev->add_option("--split", ev.split, "train or val (default val)");
  c_ev->add_option("--config", ev.config_path, "pipeline config JSON");
  c_ev->add_option("--batch-size", ev.batch_size, "evaluation batch size");
  c_ev->add_option("--out-csv", ev.out_csv, "write the confusion matrix as CSV");
  c_ev->add_option("--out-json", ev.out_json, "write accuracy metrics as JSON");
  c_ev->callback([&] { run_eval(ev); });

  PredictOpts pr;
  auto* c_pr = app.add_subcommand("predict", "predict the language of WAV files");
  c_pr->fallthrough();
  c_pr->add_option("--checkpoint", pr.checkpoint, "model checkpoint")->required();
  c_pr->add_option("--manifest", pr.manifest_path, "manifest CSV naming the classes");
  c_pr->add_option("--config", pr.config_path, "pipeline config JSON");
  c_pr->add_option("wavs", pr.wavs, "WAV files to classify")->required()->expected(-1);
  c_pr->callback([&] { run_predict(pr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.user_error() ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
