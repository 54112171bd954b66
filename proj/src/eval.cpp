#include "lifas/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace lifas {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts)
    for (const std::int64_t c : row) n += c;
  return n;
}

std::vector<Index> predict(Model<float>& model, const Tensor<float>& images) {
  const Tensor<float> logits = model_forward<float>(model, images, Mode::eval, nullptr);
  const Index N = logits.dim(0), K = logits.dim(1);
  std::vector<Index> preds(static_cast<std::size_t>(N));
  for (Index n = 0; n < N; ++n) {
    Index best = 0;
    for (Index k = 1; k < K; ++k)
      if (logits.at(n, k) > logits.at(n, best)) best = k;
    preds[std::size_t(n)] = best;
  }
  return preds;
}

std::vector<std::vector<double>> softmax_probabilities(const Tensor<float>& logits) {
  if (logits.rank() != 2)
    throw Error(Error::Code::shape_mismatch, "softmax_probabilities: logits must be rank 2");
  const Index N = logits.dim(0), K = logits.dim(1);
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(N),
                                         std::vector<double>(static_cast<std::size_t>(K)));
  for (Index n = 0; n < N; ++n) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < K; ++k) max_logit = std::max(max_logit, double(logits.at(n, k)));
    double sum = 0.0;
    for (Index k = 0; k < K; ++k) {
      const double e = std::exp(double(logits.at(n, k)) - max_logit);
      probs[std::size_t(n)][std::size_t(k)] = e;
      sum += e;
    }
    for (Index k = 0; k < K; ++k) probs[std::size_t(n)][std::size_t(k)] /= sum;
  }
  return probs;
}

namespace {

void check_square(const ConfusionMatrix& cm, const char* what) {
  if (cm.labels.empty() || cm.counts.size() != cm.labels.size())
    throw Error(Error::Code::bad_argument,
                std::string(what) + ": confusion matrix is empty or ragged");
  for (const auto& row : cm.counts)
    if (row.size() != cm.labels.size())
      throw Error(Error::Code::bad_argument,
                  std::string(what) + ": confusion matrix is empty or ragged");
}

}  // namespace

double accuracy(const ConfusionMatrix& cm) {
  check_square(cm, "accuracy");
  const std::int64_t total = cm.total();
  if (total == 0)
    throw Error(Error::Code::bad_argument, "accuracy: confusion matrix counts no clips");
  std::int64_t trace = 0;
  for (std::size_t i = 0; i < cm.counts.size(); ++i) trace += cm.counts[i][i];
  return double(trace) / double(total);
}

std::map<std::string, std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm) {
  check_square(cm, "per_class_accuracy");
  std::map<std::string, std::optional<double>> out;
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    std::int64_t row_sum = 0;
    for (const std::int64_t c : cm.counts[i]) row_sum += c;
    if (row_sum == 0)
      out[cm.labels[i]] = std::nullopt;
    else
      out[cm.labels[i]] = double(cm.counts[i][i]) / double(row_sum);
  }
  return out;
}

EvalResult evaluate(Model<float>& model, const Manifest& manifest, Split split,
                    const SpectrogramConfig& config, Index batch_size, Index clip_len_samples) {
  if (model.spec.n_classes != Index(manifest.labels.size()))
    throw Error(Error::Code::bad_argument,
                "evaluate: model has " + std::to_string(model.spec.n_classes) +
                    " classes but the manifest has " + std::to_string(manifest.labels.size()) +
                    " languages");

  EvalResult result;
  result.cm.labels = manifest.labels;
  result.cm.counts.assign(manifest.labels.size(),
                          std::vector<std::int64_t>(manifest.labels.size(), 0));

  BatchStream stream(manifest, split, config, nullptr, batch_size, /*epoch_seed=*/0,
                     clip_len_samples);
  if (stream.n_entries() == 0)
    throw Error(Error::Code::bad_argument,
                "evaluate: manifest has no '" + std::string(to_string(split)) + "' entries");

  double loss_sum = 0.0;
  while (auto batch = stream.next()) {
    const Index n = batch->images.dim(0);
    const Tensor<float> logits = model_forward<float>(model, batch->images, Mode::eval, nullptr);
    loss_sum += softmax_cross_entropy(logits, batch->labels).loss * double(n);
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      for (Index k = 1; k < logits.dim(1); ++k)
        if (logits.at(i, k) > logits.at(i, best)) best = k;
      result.cm.counts[std::size_t(batch->labels[std::size_t(i)])][std::size_t(best)] += 1;
    }
    result.n_eval += n;
  }
  if (result.n_eval == 0)
    throw Error(Error::Code::bad_argument, "evaluate: no clip in the split could be decoded");

  result.mean_loss = loss_sum / double(result.n_eval);
  result.accuracy = accuracy(result.cm);
  result.per_class = per_class_accuracy(result.cm);
  return result;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true_class";
  for (const auto& label : cm.labels) out += "," + label;
  out += "\n";
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    out += cm.labels[i];
    for (const std::int64_t c : cm.counts[i]) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

std::string confusion_text(const ConfusionMatrix& cm) {
  std::size_t label_width = 0;
  for (const auto& label : cm.labels) label_width = std::max(label_width, label.size());
  std::vector<std::size_t> col_width(cm.labels.size());
  for (std::size_t j = 0; j < cm.labels.size(); ++j) {
    col_width[j] = cm.labels[j].size();
    for (std::size_t i = 0; i < cm.counts.size(); ++i)
      col_width[j] = std::max(col_width[j], std::to_string(cm.counts[i][j]).size());
  }

  const auto pad_left = [](const std::string& s, std::size_t w) {
    return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
  };

  std::string out = "rows = true class, columns = predicted class\n";
  out += std::string(label_width, ' ');
  for (std::size_t j = 0; j < cm.labels.size(); ++j)
    out += "  " + pad_left(cm.labels[j], col_width[j]);
  out += "\n";
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    out += pad_left(cm.labels[i], label_width);
    for (std::size_t j = 0; j < cm.labels.size(); ++j)
      out += "  " + pad_left(std::to_string(cm.counts[i][j]), col_width[j]);
    out += "\n";
  }
  return out;
}

std::string metrics_json(const EvalResult& result) {
  nlohmann::json per_class;
  for (const auto& [label, value] : result.per_class) {
    if (value)
      per_class[label] = *value;
    else
      per_class[label] = nullptr;
  }
  const nlohmann::json j{
      {"accuracy", result.accuracy}, {"per_class", per_class}, {"n_eval", result.n_eval}};
  return j.dump(2) + "\n";
}

}  // namespace lifas
