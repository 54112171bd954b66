#pragma once

#include <string>

#include "lifas/augment.hpp"
#include "lifas/common.hpp"
#include "lifas/dsp.hpp"
#include "lifas/model.hpp"
#include "lifas/synth.hpp"
#include "lifas/train.hpp"

namespace lifas {

// Everything a training run needs, bundled so a run is reproducible from one
// JSON artifact. `augment` defaults to an inert all-zero policy; masking is
// active only when the config provides mask parameters.
struct PipelineConfig {
  ModelSpec model;
  SpectrogramConfig spectrogram;
  TrainConfig train;
  OneCycleSchedule schedule;  // total_steps 0 = derive from epochs x batches
  AugmentPolicy augment;
  Index clip_len_samples = 60000;

  void validate() const;
};

// JSON round trip. Parsing is strict about keys (unknown keys are errors) but
// lenient about omissions (missing keys keep the defaults above). Any parse,
// type, or validation failure throws Error::Code::config.
std::string to_json_text(const PipelineConfig& config);
std::string to_json_text(const ModelSpec& spec);
std::string to_json_text(const SyntheticTaskSpec& spec);

PipelineConfig pipeline_config_from_json(const std::string& text);
ModelSpec model_spec_from_json(const std::string& text);
SyntheticTaskSpec synth_spec_from_json(const std::string& text);

}  // namespace lifas
