#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lifas/dataset.hpp"
#include "lifas/model.hpp"

namespace lifas {

// Rows are the true class, columns the predicted class; labels index both.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::int64_t>> counts;

  std::int64_t total() const;
};

// Argmax over logits per image; ties break to the lowest index.
std::vector<Index> predict(Model<float>& model, const Tensor<float>& images);

// Softmax per row of rank-2 logits, in double for stable display.
std::vector<std::vector<double>> softmax_probabilities(const Tensor<float>& logits);

// trace/total. Throws on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

// counts[i][i]/row_sum(i); a class with no evaluated clips has no value.
std::map<std::string, std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm);

struct EvalResult {
  ConfusionMatrix cm;
  double accuracy = 0.0;
  std::map<std::string, std::optional<double>> per_class;
  double mean_loss = 0.0;
  Index n_eval = 0;
};

// Deterministic pass over one split: decode, predict, aggregate.
EvalResult evaluate(Model<float>& model, const Manifest& manifest, Split split,
                    const SpectrogramConfig& config, Index batch_size = 64,
                    Index clip_len_samples = 60000);

std::string confusion_csv(const ConfusionMatrix& cm);
std::string confusion_text(const ConfusionMatrix& cm);
std::string metrics_json(const EvalResult& result);

}  // namespace lifas
