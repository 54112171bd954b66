#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lifas/augment.hpp"
#include "lifas/common.hpp"
#include "lifas/dataset.hpp"
#include "lifas/dsp.hpp"
#include "lifas/model.hpp"
#include "lifas/tensor.hpp"

namespace lifas {

// 1-cycle learning-rate policy: linear rise from max_lr/start_div to max_lr
// over the warmup fraction of the run, then linear decay to max_lr/final_div
// at the last step.
struct OneCycleSchedule {
  double max_lr = 1e-2;
  Index total_steps = 0;  // epochs x batches per epoch
  double warmup_frac = 0.3;
  double start_div = 25.0;
  double final_div = 1e4;

  void validate() const {
    if (!(max_lr > 0.0))
      throw Error(Error::Code::bad_argument, "OneCycleSchedule: max_lr must be positive");
    if (total_steps < 2)
      throw Error(Error::Code::bad_argument, "OneCycleSchedule: total_steps must be at least 2");
    if (!(warmup_frac > 0.0 && warmup_frac < 1.0))
      throw Error(Error::Code::bad_argument, "OneCycleSchedule: warmup_frac must lie in (0, 1)");
    if (!(start_div > 1.0) || !(final_div > 1.0))
      throw Error(Error::Code::bad_argument,
                  "OneCycleSchedule: start_div and final_div must exceed 1");
  }

  Index peak_step() const { return Index(std::llround(warmup_frac * double(total_steps - 1))); }
};

// Piecewise-linear learning rate at a 0-based step. The peak value is max_lr
// exactly; both endpoints evaluate exactly (the interpolation is written as a
// convex combination so t = 0 and t = 1 reproduce the endpoints bit-for-bit).
inline double lr_at(const OneCycleSchedule& schedule, Index step) {
  schedule.validate();
  if (step < 0 || step >= schedule.total_steps)
    throw Error(Error::Code::bad_argument,
                "lr_at: step " + std::to_string(step) + " outside [0, " +
                    std::to_string(schedule.total_steps) + ")");
  const Index peak = schedule.peak_step();
  const Index last = schedule.total_steps - 1;
  if (step == peak) return schedule.max_lr;
  if (step < peak) {
    const double start = schedule.max_lr / schedule.start_div;
    const double t = double(step) / double(peak);
    return start * (1.0 - t) + schedule.max_lr * t;
  }
  const double final_lr = schedule.max_lr / schedule.final_div;
  const double t = double(step - peak) / double(last - peak);
  return schedule.max_lr * (1.0 - t) + final_lr * t;
}

struct TrainConfig {
  int epochs = 8;
  int batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw Error(Error::Code::bad_argument, "TrainConfig: epochs must be positive");
    if (batch_size < 1)
      throw Error(Error::Code::bad_argument, "TrainConfig: batch_size must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw Error(Error::Code::bad_argument, "TrainConfig: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0))
      throw Error(Error::Code::bad_argument, "TrainConfig: weight_decay must be non-negative");
  }
};

struct StepRecord {
  Index step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  Index epoch = 0;  // 0-based
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  std::string steps_csv() const;   // header: step,lr,loss
  std::string epochs_csv() const;  // header: epoch,val_loss,val_acc
};

struct FitOptions {
  std::string checkpoint_dir;  // empty = no checkpoint files
  Index clip_len_samples = 60000;
};

struct FitResult {
  TrainHistory history;
  double best_val_accuracy = 0.0;
  Index best_epoch = -1;  // 0-based; -1 when the manifest has no val split
};

// One SGD-with-momentum update: v <- momentum*v + g; p <- p - lr*v.
// Velocity entries are created (zero) on first use; gradient keys must match
// the parameter keys exactly.
template <class Scalar>
void sgd_step(std::map<std::string, Tensor<Scalar>*>& params,
              const std::map<std::string, Tensor<Scalar>>& grads,
              std::map<std::string, Tensor<Scalar>>& velocity, double lr, double momentum) {
  if (grads.size() != params.size())
    throw Error(Error::Code::bad_argument,
                "sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                    std::to_string(params.size()) + " parameters");
  for (auto& [name, param] : params) {
    const auto git = grads.find(name);
    if (git == grads.end())
      throw Error(Error::Code::bad_argument, "sgd_step: missing gradient for '" + name + "'");
    const Tensor<Scalar>& g = git->second;
    if (!g.same_shape(*param))
      throw Error(Error::Code::shape_mismatch,
                  "sgd_step: gradient shape mismatch for '" + name + "'");
    auto [vit, created] = velocity.try_emplace(name, param->dims);
    Tensor<Scalar>& v = vit->second;
    if (!created && !v.same_shape(*param))
      throw Error(Error::Code::shape_mismatch,
                  "sgd_step: velocity shape mismatch for '" + name + "'");
    const Scalar m = static_cast<Scalar>(momentum);
    const Scalar rate = static_cast<Scalar>(lr);
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      v.values[i] = m * v.values[i] + g.values[i];
      param->values[i] -= rate * v.values[i];
    }
  }
}

// Trains `model` in place: every epoch walks the train split in a seeded
// shuffle, steps SGD at lr_at(global step), then scores the val split in eval
// mode without augmentation. schedule.total_steps 0 means epochs x batches,
// derived here; a nonzero value must match it. With a checkpoint_dir, writes
// epoch_NNN.ckpt after every epoch plus best.ckpt at the best val accuracy.
FitResult fit(Model<float>& model, const Manifest& manifest, const SpectrogramConfig& spectro,
              const TrainConfig& config, OneCycleSchedule schedule, const AugmentPolicy* augment,
              const FitOptions& options = {});

}  // namespace lifas
