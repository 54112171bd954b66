#include "lifas/config.hpp"

#include <initializer_list>
#include <type_traits>

#include "json.hpp"

namespace lifas {

namespace {

using nlohmann::json;

json parse_text(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Error::Code::config, std::string(what) + ": " + e.what());
  }
}

void check_keys(const json& j, const char* what, std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw Error(Error::Code::config, std::string(what) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known)
      throw Error(Error::Code::config,
                  std::string(what) + ": unknown key '" + item.key() + "'");
  }
}

// Assigns j[key] to out if present. Numbers must match the target's
// integer/float category; JSON never silently truncates into an int field.
template <typename T>
void get_field(const json& j, const char* what, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer() && !it->is_number_unsigned())
      throw Error(Error::Code::config,
                  std::string(what) + ": key '" + key + "' must be an integer");
  }
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw Error(Error::Code::config,
                std::string(what) + ": key '" + key + "' has the wrong type");
  }
}

json spectrogram_to_json(const SpectrogramConfig& c) {
  return json{{"sample_rate_hz", c.sample_rate_hz},
              {"n_fft", c.n_fft},
              {"hop_samples", c.hop_samples},
              {"n_mels", c.n_mels},
              {"fmin_hz", c.fmin_hz},
              {"fmax_hz", c.fmax_hz},
              {"power_exponent", c.power_exponent},
              {"top_db", c.top_db},
              {"image_width_px", c.image_width_px},
              {"image_height_px", c.image_height_px}};
}

SpectrogramConfig spectrogram_from_json(const json& j) {
  const char* what = "spectrogram config";
  check_keys(j, what,
             {"sample_rate_hz", "n_fft", "hop_samples", "n_mels", "fmin_hz", "fmax_hz",
              "power_exponent", "top_db", "image_width_px", "image_height_px"});
  SpectrogramConfig c;
  get_field(j, what, "sample_rate_hz", c.sample_rate_hz);
  get_field(j, what, "n_fft", c.n_fft);
  get_field(j, what, "hop_samples", c.hop_samples);
  get_field(j, what, "n_mels", c.n_mels);
  get_field(j, what, "fmin_hz", c.fmin_hz);
  get_field(j, what, "fmax_hz", c.fmax_hz);
  get_field(j, what, "power_exponent", c.power_exponent);
  get_field(j, what, "top_db", c.top_db);
  get_field(j, what, "image_width_px", c.image_width_px);
  get_field(j, what, "image_height_px", c.image_height_px);
  return c;
}

json augment_to_json(const AugmentPolicy& p) {
  return json{{"freq_mask_param", p.freq_mask_param},
              {"time_mask_param", p.time_mask_param},
              {"n_freq_masks", p.n_freq_masks},
              {"n_time_masks", p.n_time_masks},
              {"mask_fill", p.mask_fill == MaskFill::mean ? "mean" : "min"}};
}

AugmentPolicy augment_from_json(const json& j) {
  const char* what = "augment config";
  check_keys(j, what,
             {"freq_mask_param", "time_mask_param", "n_freq_masks", "n_time_masks", "mask_fill"});
  AugmentPolicy p;
  get_field(j, what, "freq_mask_param", p.freq_mask_param);
  get_field(j, what, "time_mask_param", p.time_mask_param);
  get_field(j, what, "n_freq_masks", p.n_freq_masks);
  get_field(j, what, "n_time_masks", p.n_time_masks);
  if (const auto it = j.find("mask_fill"); it != j.end()) {
    std::string fill;
    get_field(j, what, "mask_fill", fill);
    if (fill == "mean")
      p.mask_fill = MaskFill::mean;
    else if (fill == "min")
      p.mask_fill = MaskFill::min;
    else
      throw Error(Error::Code::config,
                  std::string(what) + ": mask_fill must be \"mean\" or \"min\", got \"" + fill +
                      "\"");
  }
  return p;
}

json model_to_json(const ModelSpec& s) {
  return json{{"stem_channels", s.stem_channels},
              {"stage_channels", s.stage_channels},
              {"blocks_per_stage", s.blocks_per_stage},
              {"n_classes", s.n_classes},
              {"input_height", s.input_height},
              {"input_width", s.input_width},
              {"stem_stride", s.stem_stride}};
}

ModelSpec model_from_json(const json& j) {
  const char* what = "model config";
  check_keys(j, what,
             {"stem_channels", "stage_channels", "blocks_per_stage", "n_classes", "input_height",
              "input_width", "stem_stride"});
  ModelSpec s;
  get_field(j, what, "stem_channels", s.stem_channels);
  get_field(j, what, "stage_channels", s.stage_channels);
  get_field(j, what, "blocks_per_stage", s.blocks_per_stage);
  get_field(j, what, "n_classes", s.n_classes);
  get_field(j, what, "input_height", s.input_height);
  get_field(j, what, "input_width", s.input_width);
  get_field(j, what, "stem_stride", s.stem_stride);
  return s;
}

json train_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed}};
}

TrainConfig train_from_json(const json& j) {
  const char* what = "train config";
  check_keys(j, what, {"epochs", "batch_size", "momentum", "weight_decay", "seed"});
  TrainConfig c;
  get_field(j, what, "epochs", c.epochs);
  get_field(j, what, "batch_size", c.batch_size);
  get_field(j, what, "momentum", c.momentum);
  get_field(j, what, "weight_decay", c.weight_decay);
  get_field(j, what, "seed", c.seed);
  return c;
}

json schedule_to_json(const OneCycleSchedule& s) {
  return json{{"max_lr", s.max_lr},
              {"total_steps", s.total_steps},
              {"warmup_frac", s.warmup_frac},
              {"start_div", s.start_div},
              {"final_div", s.final_div}};
}

OneCycleSchedule schedule_from_json(const json& j) {
  const char* what = "schedule config";
  check_keys(j, what, {"max_lr", "total_steps", "warmup_frac", "start_div", "final_div"});
  OneCycleSchedule s;
  get_field(j, what, "max_lr", s.max_lr);
  get_field(j, what, "total_steps", s.total_steps);
  get_field(j, what, "warmup_frac", s.warmup_frac);
  get_field(j, what, "start_div", s.start_div);
  get_field(j, what, "final_div", s.final_div);
  return s;
}

json synth_class_to_json(const SynthClass& c) {
  return json{{"name", c.name},
              {"band_lo_hz", c.band_lo_hz},
              {"band_hi_hz", c.band_hi_hz},
              {"am_rate_hz", c.am_rate_hz}};
}

SynthClass synth_class_from_json(const json& j) {
  const char* what = "synth class";
  check_keys(j, what, {"name", "band_lo_hz", "band_hi_hz", "am_rate_hz"});
  SynthClass c;
  get_field(j, what, "name", c.name);
  get_field(j, what, "band_lo_hz", c.band_lo_hz);
  get_field(j, what, "band_hi_hz", c.band_hi_hz);
  get_field(j, what, "am_rate_hz", c.am_rate_hz);
  return c;
}

std::string dump_pretty(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

void PipelineConfig::validate() const {
  model.validate();
  spectrogram.validate();
  train.validate();
  augment.validate();
  OneCycleSchedule s = schedule;
  if (s.total_steps == 0) s.total_steps = 2;  // the trainer derives the real count
  s.validate();
  if (clip_len_samples < spectrogram.n_fft)
    throw Error(Error::Code::config,
                "pipeline config: clip_len_samples is shorter than one analysis frame");
  if (model.input_height != spectrogram.image_height_px ||
      model.input_width != spectrogram.image_width_px)
    throw Error(Error::Code::config,
                "pipeline config: model input " + std::to_string(model.input_height) + "x" +
                    std::to_string(model.input_width) + " does not match the spectrogram image " +
                    std::to_string(spectrogram.image_height_px) + "x" +
                    std::to_string(spectrogram.image_width_px));
}

std::string to_json_text(const PipelineConfig& config) {
  json j{{"model", model_to_json(config.model)},
         {"spectrogram", spectrogram_to_json(config.spectrogram)},
         {"train", train_to_json(config.train)},
         {"schedule", schedule_to_json(config.schedule)},
         {"clip_len_samples", config.clip_len_samples}};
  if (config.augment.enabled()) j["augment"] = augment_to_json(config.augment);
  return dump_pretty(j);
}

std::string to_json_text(const ModelSpec& spec) { return dump_pretty(model_to_json(spec)); }

std::string to_json_text(const SyntheticTaskSpec& spec) {
  json classes = json::array();
  for (const auto& c : spec.classes) classes.push_back(synth_class_to_json(c));
  return dump_pretty(json{{"classes", classes},
                          {"train_clips_per_class", spec.train_clips_per_class},
                          {"val_clips_per_class", spec.val_clips_per_class},
                          {"n_speakers_per_class", spec.n_speakers_per_class},
                          {"clip_len_samples", spec.clip_len_samples},
                          {"sample_rate_hz", spec.sample_rate_hz},
                          {"seed", spec.seed}});
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  const char* what = "pipeline config";
  const json j = parse_text(text, what);
  check_keys(j, what, {"model", "spectrogram", "train", "schedule", "augment", "clip_len_samples"});
  PipelineConfig config;
  if (const auto it = j.find("model"); it != j.end()) config.model = model_from_json(*it);
  if (const auto it = j.find("spectrogram"); it != j.end())
    config.spectrogram = spectrogram_from_json(*it);
  if (const auto it = j.find("train"); it != j.end()) config.train = train_from_json(*it);
  if (const auto it = j.find("schedule"); it != j.end())
    config.schedule = schedule_from_json(*it);
  if (const auto it = j.find("augment"); it != j.end()) config.augment = augment_from_json(*it);
  get_field(j, what, "clip_len_samples", config.clip_len_samples);
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(Error::Code::config, std::string("pipeline config: ") + e.what());
  }
  return config;
}

ModelSpec model_spec_from_json(const std::string& text) {
  const json j = parse_text(text, "model config");
  ModelSpec spec = model_from_json(j);
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(Error::Code::config, std::string("model config: ") + e.what());
  }
  return spec;
}

SyntheticTaskSpec synth_spec_from_json(const std::string& text) {
  const char* what = "synth spec";
  const json j = parse_text(text, what);
  check_keys(j, what,
             {"classes", "train_clips_per_class", "val_clips_per_class", "n_speakers_per_class",
              "clip_len_samples", "sample_rate_hz", "seed"});
  SyntheticTaskSpec spec;
  if (const auto it = j.find("classes"); it != j.end()) {
    if (!it->is_array())
      throw Error(Error::Code::config, std::string(what) + ": 'classes' must be an array");
    spec.classes.clear();
    for (const auto& item : *it) spec.classes.push_back(synth_class_from_json(item));
  }
  get_field(j, what, "train_clips_per_class", spec.train_clips_per_class);
  get_field(j, what, "val_clips_per_class", spec.val_clips_per_class);
  get_field(j, what, "n_speakers_per_class", spec.n_speakers_per_class);
  get_field(j, what, "clip_len_samples", spec.clip_len_samples);
  get_field(j, what, "sample_rate_hz", spec.sample_rate_hz);
  get_field(j, what, "seed", spec.seed);
  spec.validate();
  return spec;
}

}  // namespace lifas
