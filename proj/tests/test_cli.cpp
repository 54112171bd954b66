#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "lifas/common.hpp"
#include "lifas/config.hpp"

using namespace lifas;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;  // stdout and stderr combined
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(LIFAS_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, output};
}

std::string slurp(const fs::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// A corpus plus a pipeline config sized for sub-second training runs.
struct CliFixture {
  testutil::TempDir dir{"cli"};
  std::string corpus, raw_csv, split_csv, config_path;

  CliFixture() {
    corpus = (dir / "corpus").string();
    raw_csv = (dir / "raw.csv").string();
    split_csv = (dir / "split.csv").string();
    config_path = (dir / "config.json").string();

    write_file_atomic(dir / "task.json", to_json_text(testutil::tiny_task_spec()));

    PipelineConfig config;
    config.model = testutil::tiny_model_spec(2);
    config.spectrogram = testutil::tiny_spectro();
    config.train.epochs = 2;
    config.train.batch_size = 8;
    config.train.seed = 3;
    config.clip_len_samples = 4000;
    write_file_atomic(config_path, to_json_text(config));

    REQUIRE(run_cli("synth " + (dir / "task.json").string() + " " + corpus).exit_code == 0);
    REQUIRE(run_cli("ingest " + corpus + " --out " + raw_csv).exit_code == 0);
    REQUIRE(run_cli("split --manifest " + raw_csv +
                    " --train-per-lang 12 --val-per-lang 4 --seed 7 --out " + split_csv)
                .exit_code == 0);
  }
};

}  // namespace

TEST_CASE("cli: spectrogram prints dims and writes identical bytes on rerun") {
  testutil::TempDir dir("cli_spec");
  testutil::write_sine_wav(dir / "tone.wav", 4000, 500.0);

  const std::string flags =
      " --n-fft 256 --hop-samples 128 --n-mels 16 --image-height-px 32 --image-width-px 48";
  const std::string base = "spectrogram " + (dir / "tone.wav").string() + flags;

  const RunResult a = run_cli(base + " --out-pgm " + (dir / "a.pgm").string() + " --out-csv " +
                              (dir / "a.csv").string());
  CHECK(a.exit_code == 0);
  CHECK(a.output == "16 x 30\n");  // 1 + (4000 - 256) / 128 = 30 frames

  const RunResult b = run_cli(base + " --out-pgm " + (dir / "b.pgm").string() + " --out-csv " +
                              (dir / "b.csv").string());
  CHECK(b.exit_code == 0);
  CHECK(slurp(dir / "a.pgm") == slurp(dir / "b.pgm"));
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  const std::string pgm = slurp(dir / "a.pgm");
  CHECK(pgm.substr(0, 13) == "P5\n48 32\n255\n");
  CHECK(pgm.size() == 13 + 48 * 32);
}

TEST_CASE("cli: usage and input failures exit 2, help exits 0") {
  const RunResult missing = run_cli("spectrogram /nonexistent/clip.wav");
  CHECK(missing.exit_code == 2);
  CHECK(missing.output.find("/nonexistent/clip.wav") != std::string::npos);

  CHECK(run_cli("--frobnicate").exit_code == 2);
  CHECK(run_cli("").exit_code == 2);
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("train --manifest /nonexistent.csv --out-dir /tmp/x").exit_code == 2);
}

TEST_CASE("cli: synth -> ingest -> split -> train -> eval -> predict round trip") {
  CliFixture fx;
  const std::string run_dir = (fx.dir / "run").string();

  const RunResult train = run_cli("train --manifest " + fx.split_csv + " --out-dir " + run_dir +
                                  " --config " + fx.config_path);
  CHECK(train.exit_code == 0);
  CHECK(train.output.find("trained 2 epochs") != std::string::npos);
  CHECK(train.output.find("best val accuracy") != std::string::npos);
  for (const char* name : {"best.ckpt", "epoch_001.ckpt", "epoch_002.ckpt", "config.json",
                           "history_steps.csv", "history_epochs.csv", "metrics.json",
                           "confusion.csv"})
    CHECK(fs::exists(fs::path(run_dir) / name));

  // The emitted config reproduces the run: total_steps is pinned.
  const PipelineConfig emitted = pipeline_config_from_json(slurp(fs::path(run_dir) / "config.json"));
  CHECK(emitted.schedule.total_steps == 6);  // 24 clips / batch 8 = 3 steps x 2 epochs
  CHECK(emitted.model.n_classes == 2);

  const RunResult ev = run_cli("eval --checkpoint " + run_dir + "/best.ckpt --manifest " +
                               fx.split_csv + " --config " + fx.config_path);
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("accuracy") != std::string::npos);
  CHECK(ev.output.find("rows = true class") != std::string::npos);

  // Any corpus clip works for predict; probabilities for both classes print.
  std::string wav;
  for (const auto& entry : fs::recursive_directory_iterator(fx.corpus))
    if (entry.path().extension() == ".wav") {
      wav = entry.path().string();
      break;
    }
  REQUIRE(!wav.empty());
  const RunResult pred = run_cli("predict --checkpoint " + run_dir + "/best.ckpt --manifest " +
                                 fx.split_csv + " --config " + fx.config_path + " " + wav);
  CHECK(pred.exit_code == 0);
  CHECK(pred.output.find(wav + ": ") != std::string::npos);
  CHECK(pred.output.find("lowband=0.") != std::string::npos);
  CHECK(pred.output.find("highband=0.") != std::string::npos);
}

TEST_CASE("cli: --single-threaded reruns are byte-identical") {
  CliFixture fx;
  const std::string a = (fx.dir / "run_a").string();
  const std::string b = (fx.dir / "run_b").string();
  const std::string train = "--single-threaded train --manifest " + fx.split_csv + " --config " +
                            fx.config_path + " --out-dir ";
  REQUIRE(run_cli(train + a).exit_code == 0);
  REQUIRE(run_cli(train + b).exit_code == 0);

  for (const char* name : {"history_steps.csv", "history_epochs.csv", "metrics.json"})
    CHECK(slurp(fs::path(a) / name) == slurp(fs::path(b) / name));
  CHECK(slurp(fs::path(a) / "best.ckpt") == slurp(fs::path(b) / "best.ckpt"));
}

TEST_CASE("cli: train rejects an unsplit manifest and flags beat the config file") {
  CliFixture fx;
  const RunResult unsplit = run_cli("train --manifest " + fx.raw_csv + " --out-dir " +
                                    (fx.dir / "nope").string() + " --config " + fx.config_path);
  CHECK(unsplit.exit_code == 2);
  CHECK(unsplit.output.find("no train entries") != std::string::npos);

  const std::string run_dir = (fx.dir / "run_flags").string();
  const RunResult train = run_cli("train --manifest " + fx.split_csv + " --out-dir " + run_dir +
                                  " --config " + fx.config_path + " --epochs 1 --seed 9");
  CHECK(train.exit_code == 0);
  CHECK(train.output.find("trained 1 epochs") != std::string::npos);
  const PipelineConfig emitted = pipeline_config_from_json(slurp(fs::path(run_dir) / "config.json"));
  CHECK(emitted.train.epochs == 1);
  CHECK(emitted.train.seed == 9);
  CHECK(!fs::exists(fs::path(run_dir) / "epoch_002.ckpt"));
}
