#include "lifas/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "lifas/checkpoint.hpp"
#include "lifas/eval.hpp"

namespace fs = std::filesystem;

namespace lifas {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string TrainHistory::steps_csv() const {
  std::string out = "step,lr,loss\n";
  for (const StepRecord& r : steps)
    out += std::to_string(r.step) + "," + g17(r.lr) + "," + g17(r.loss) + "\n";
  return out;
}

std::string TrainHistory::epochs_csv() const {
  std::string out = "epoch,val_loss,val_acc\n";
  for (const EpochRecord& r : epochs)
    out += std::to_string(r.epoch) + "," + g17(r.val_loss) + "," + g17(r.val_accuracy) + "\n";
  return out;
}

FitResult fit(Model<float>& model, const Manifest& manifest, const SpectrogramConfig& spectro,
              const TrainConfig& config, OneCycleSchedule schedule, const AugmentPolicy* augment,
              const FitOptions& options) {
  config.validate();
  spectro.validate();
  if (augment) augment->validate();

  const Index train_count = manifest.count(Split::train);
  if (train_count == 0)
    throw Error(Error::Code::bad_argument, "fit: manifest has no train entries");
  const Index batches_per_epoch = (train_count + config.batch_size - 1) / config.batch_size;
  const Index planned_steps = Index(config.epochs) * batches_per_epoch;
  if (schedule.total_steps == 0)
    schedule.total_steps = planned_steps;
  else if (schedule.total_steps != planned_steps)
    throw Error(Error::Code::config,
                "fit: schedule.total_steps " + std::to_string(schedule.total_steps) +
                    " does not match epochs x batches/epoch = " + std::to_string(planned_steps));
  schedule.validate();

  const bool has_val = manifest.count(Split::val) > 0;
  if (!options.checkpoint_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options.checkpoint_dir, ec);
    if (ec)
      throw Error(Error::Code::io, "fit: cannot create '" + options.checkpoint_dir + "'");
  }

  auto params = trainable_parameters(model);
  std::map<std::string, Tensor<float>> velocity;
  FitResult result;
  Index gstep = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    BatchStream stream(manifest, Split::train, spectro, augment, config.batch_size,
                       mix_seed(config.seed, std::uint64_t(epoch)), options.clip_len_samples);
    Index batch_index = 0;
    while (auto batch = stream.next()) {
      BackwardResult<float> back = model_backward(model, batch->images, batch->labels);
      if (!std::isfinite(back.loss))
        throw Error(Error::Code::numeric,
                    "fit: training loss is non-finite at step " + std::to_string(gstep) +
                        " (epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch_index) + ")");
      if (config.weight_decay > 0.0) {
        const float wd = float(config.weight_decay);
        for (auto& [name, param] : params) {
          auto git = back.grads.find(name);
          if (git == back.grads.end())
            throw Error(Error::Code::bad_argument, "fit: missing gradient for '" + name + "'");
          for (std::size_t i = 0; i < param->values.size(); ++i)
            git->second.values[i] += wd * param->values[i];
        }
      }
      const double rate = lr_at(schedule, gstep);
      sgd_step(params, back.grads, velocity, rate, config.momentum);
      result.history.steps.push_back({gstep, rate, back.loss});
      ++gstep;
      ++batch_index;
    }

    if (has_val) {
      const EvalResult eval = evaluate(model, manifest, Split::val, spectro, config.batch_size,
                                       options.clip_len_samples);
      result.history.epochs.push_back({epoch, eval.mean_loss, eval.accuracy});
      if (eval.accuracy > result.best_val_accuracy || result.best_epoch < 0) {
        result.best_val_accuracy = eval.accuracy;
        result.best_epoch = epoch;
        if (!options.checkpoint_dir.empty())
          save_checkpoint(model, fs::path(options.checkpoint_dir) / "best.ckpt");
      }
    }
    if (!options.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03d.ckpt", epoch + 1);
      save_checkpoint(model, fs::path(options.checkpoint_dir) / name);
    }
  }
  return result;
}

}  // namespace lifas
