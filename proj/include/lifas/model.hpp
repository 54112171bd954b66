#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lifas/common.hpp"
#include "lifas/nn.hpp"
#include "lifas/tensor.hpp"

namespace lifas {

// Architecture hyperparameters. Input is a single-channel image; the first
// block of every stage after the first halves the spatial resolution, and the
// stem applies its own stride so large inputs stay affordable.
struct ModelSpec {
  int stem_channels = 16;
  std::vector<int> stage_channels = {16, 32, 64};
  std::vector<int> blocks_per_stage = {1, 1, 1};
  int n_classes = 2;
  int input_height = 288;
  int input_width = 432;
  int stem_stride = 2;

  void validate() const {
    if (stem_channels < 1 || n_classes < 2 || input_height < 1 || input_width < 1 ||
        stem_stride < 1)
      throw Error(Error::Code::bad_argument, "ModelSpec: fields must be positive (n_classes >= 2)");
    if (stage_channels.empty() || stage_channels.size() != blocks_per_stage.size())
      throw Error(Error::Code::bad_argument,
                  "ModelSpec: stage_channels and blocks_per_stage must be non-empty and equal length");
    for (const int c : stage_channels)
      if (c < 1) throw Error(Error::Code::bad_argument, "ModelSpec: stage channels must be positive");
    for (const int b : blocks_per_stage)
      if (b < 1) throw Error(Error::Code::bad_argument, "ModelSpec: blocks per stage must be positive");
  }
};

inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEpsilon = 1e-5;

template <class Scalar>
struct ConvLayer {
  Tensor<Scalar> kernel;  // (out_channels, in_channels, k, k)
  int stride = 1;
  int pad = 0;
};

template <class Scalar>
struct BnLayer {
  Tensor<Scalar> gain, bias, running_mean, running_var;
};

template <class Scalar>
struct ResidualBlock {
  int stride = 1;
  bool projected = false;  // 1x1 conv + bn on the shortcut
  ConvLayer<Scalar> conv1, conv2, proj;
  BnLayer<Scalar> bn1, bn2, proj_bn;
};

template <class Scalar>
struct Model {
  ModelSpec spec;
  ConvLayer<Scalar> stem;
  BnLayer<Scalar> stem_bn;
  std::vector<ResidualBlock<Scalar>> blocks;       // stages flattened
  std::vector<std::string> block_names;            // "stage{s}.block{b}"
  Tensor<Scalar> head_weight, head_bias;
};

namespace detail {

template <class Scalar>
BnLayer<Scalar> make_bn(Index channels) {
  BnLayer<Scalar> bn;
  bn.gain = Tensor<Scalar>({channels});
  bn.bias = Tensor<Scalar>({channels});
  bn.running_mean = Tensor<Scalar>({channels});
  bn.running_var = Tensor<Scalar>({channels});
  return bn;
}

}  // namespace detail

// Allocates all parameters (zero-filled; see init_parameters).
template <class Scalar>
Model<Scalar> make_model(const ModelSpec& spec) {
  spec.validate();
  Model<Scalar> model;
  model.spec = spec;

  model.stem.kernel = Tensor<Scalar>({spec.stem_channels, 1, 3, 3});
  model.stem.stride = spec.stem_stride;
  model.stem.pad = 1;
  model.stem_bn = detail::make_bn<Scalar>(spec.stem_channels);

  Index in_ch = spec.stem_channels;
  for (std::size_t s = 0; s < spec.stage_channels.size(); ++s) {
    const Index ch = spec.stage_channels[s];
    for (int b = 0; b < spec.blocks_per_stage[s]; ++b) {
      ResidualBlock<Scalar> block;
      block.stride = (s > 0 && b == 0) ? 2 : 1;
      block.conv1.kernel = Tensor<Scalar>({ch, in_ch, 3, 3});
      block.conv1.stride = block.stride;
      block.conv1.pad = 1;
      block.bn1 = detail::make_bn<Scalar>(ch);
      block.conv2.kernel = Tensor<Scalar>({ch, ch, 3, 3});
      block.conv2.stride = 1;
      block.conv2.pad = 1;
      block.bn2 = detail::make_bn<Scalar>(ch);
      block.projected = block.stride != 1 || in_ch != ch;
      if (block.projected) {
        block.proj.kernel = Tensor<Scalar>({ch, in_ch, 1, 1});
        block.proj.stride = block.stride;
        block.proj.pad = 0;
        block.proj_bn = detail::make_bn<Scalar>(ch);
      }
      model.blocks.push_back(std::move(block));
      model.block_names.push_back("stage" + std::to_string(s) + ".block" + std::to_string(b));
      in_ch = ch;
    }
  }

  model.head_weight = Tensor<Scalar>({spec.n_classes, in_ch});
  model.head_bias = Tensor<Scalar>({spec.n_classes});
  return model;
}

// Every tensor in the model, keyed by a stable dotted name. Running stats are
// included (they are stored state), but carry no gradients.
template <class Scalar>
std::map<std::string, Tensor<Scalar>*> named_parameters(Model<Scalar>& model) {
  std::map<std::string, Tensor<Scalar>*> params;
  const auto add_bn = [&params](const std::string& prefix, BnLayer<Scalar>& bn) {
    params[prefix + ".gain"] = &bn.gain;
    params[prefix + ".bias"] = &bn.bias;
    params[prefix + ".running_mean"] = &bn.running_mean;
    params[prefix + ".running_var"] = &bn.running_var;
  };
  params["stem.conv.kernel"] = &model.stem.kernel;
  add_bn("stem.bn", model.stem_bn);
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    auto& block = model.blocks[i];
    const std::string& name = model.block_names[i];
    params[name + ".conv1.kernel"] = &block.conv1.kernel;
    add_bn(name + ".bn1", block.bn1);
    params[name + ".conv2.kernel"] = &block.conv2.kernel;
    add_bn(name + ".bn2", block.bn2);
    if (block.projected) {
      params[name + ".proj.kernel"] = &block.proj.kernel;
      add_bn(name + ".proj_bn", block.proj_bn);
    }
  }
  params["head.weight"] = &model.head_weight;
  params["head.bias"] = &model.head_bias;
  return params;
}

template <class Scalar>
std::map<std::string, const Tensor<Scalar>*> named_parameters(const Model<Scalar>& model) {
  std::map<std::string, const Tensor<Scalar>*> params;
  for (const auto& [name, tensor] : named_parameters(const_cast<Model<Scalar>&>(model)))
    params.emplace(name, tensor);
  return params;
}

// The subset of named_parameters that receives gradients.
template <class Scalar>
std::map<std::string, Tensor<Scalar>*> trainable_parameters(Model<Scalar>& model) {
  auto params = named_parameters(model);
  for (auto it = params.begin(); it != params.end();) {
    const bool running = it->first.ends_with(".running_mean") || it->first.ends_with(".running_var");
    it = running ? params.erase(it) : std::next(it);
  }
  return params;
}

// He-normal for conv kernels (std = sqrt(2 / fan_in)), gain 1, running
// variance 1, everything else 0. The head starts at zero so the initial
// logits vanish and the loss starts at exactly ln(n_classes); a He-normal
// head inflates the starting loss well past that on many seeds. Parameters
// are visited in sorted name order, so a seed fixes the full initialization.
template <class Scalar>
void init_parameters(Model<Scalar>& model, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, tensor] : named_parameters(model)) {
    if (name.ends_with(".kernel")) {
      const Index fan_in = tensor->dim(1) * tensor->dim(2) * tensor->dim(3);
      const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : tensor->values) v = static_cast<Scalar>(rng.normal() * std_dev);
    } else if (name.ends_with(".gain") || name.ends_with(".running_var")) {
      for (auto& v : tensor->values) v = Scalar(1);
    } else {
      for (auto& v : tensor->values) v = Scalar(0);
    }
  }
}

template <class Scalar>
struct BlockCache {
  Tensor<Scalar> input;
  BnCache<Scalar> bn1, bn2, proj_bn;
  Tensor<Scalar> relu1;
};

template <class Scalar>
struct ModelCache {
  BnCache<Scalar> stem_bn;
  std::vector<BlockCache<Scalar>> blocks;  // blocks[i].input = output of layer i-1
  Tensor<Scalar> final_output;             // last block's output (pool input)
  Tensor<Scalar> pooled;                   // pool output (head input)
};

// out = relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)).
template <class Scalar>
Tensor<Scalar> residual_block_forward(ResidualBlock<Scalar>& block, const Tensor<Scalar>& x,
                                      Mode mode, BlockCache<Scalar>* cache = nullptr) {
  const Scalar momentum = static_cast<Scalar>(kBnMomentum);
  const Scalar epsilon = static_cast<Scalar>(kBnEpsilon);

  Tensor<Scalar> h = conv2d_forward(x, block.conv1.kernel, block.conv1.stride, block.conv1.pad);
  h = batchnorm2d(h, block.bn1.gain, block.bn1.bias, block.bn1.running_mean,
                  block.bn1.running_var, mode, momentum, epsilon, cache ? &cache->bn1 : nullptr);
  h = relu(h);
  Tensor<Scalar> h2 = conv2d_forward(h, block.conv2.kernel, block.conv2.stride, block.conv2.pad);
  if (cache) cache->relu1 = std::move(h);
  h2 = batchnorm2d(h2, block.bn2.gain, block.bn2.bias, block.bn2.running_mean,
                   block.bn2.running_var, mode, momentum, epsilon, cache ? &cache->bn2 : nullptr);

  if (block.projected) {
    Tensor<Scalar> sc = conv2d_forward(x, block.proj.kernel, block.proj.stride, block.proj.pad);
    sc = batchnorm2d(sc, block.proj_bn.gain, block.proj_bn.bias, block.proj_bn.running_mean,
                     block.proj_bn.running_var, mode, momentum, epsilon,
                     cache ? &cache->proj_bn : nullptr);
    if (!h2.same_shape(sc))
      throw Error(Error::Code::shape_mismatch, "residual block: shortcut shape mismatch");
    for (std::size_t i = 0; i < h2.values.size(); ++i) h2.values[i] += sc.values[i];
  } else {
    if (!h2.same_shape(x))
      throw Error(Error::Code::shape_mismatch, "residual block: identity shortcut shape mismatch");
    for (std::size_t i = 0; i < h2.values.size(); ++i) h2.values[i] += x.values[i];
  }
  return relu(h2);
}

// Gradient of residual_block_forward. `output` is the block's forward output
// (held by the caller, since it doubles as the next layer's input); returns
// the gradient with respect to x and fills `grads` under `prefix`.
template <class Scalar>
Tensor<Scalar> residual_block_backward(const ResidualBlock<Scalar>& block,
                                       const BlockCache<Scalar>& cache,
                                       const Tensor<Scalar>& output,
                                       const Tensor<Scalar>& grad_out, const std::string& prefix,
                                       std::map<std::string, Tensor<Scalar>>& grads) {
  const Tensor<Scalar> d_add = relu_backward(grad_out, output);

  // Main path, last op first.
  BnGrads<Scalar> dbn2 = batchnorm2d_backward(d_add, cache.bn2, block.bn2.gain);
  grads[prefix + ".bn2.gain"] = std::move(dbn2.grad_gain);
  grads[prefix + ".bn2.bias"] = std::move(dbn2.grad_bias);
  Conv2dGrads<Scalar> dconv2 = conv2d_backward(cache.relu1, block.conv2.kernel, dbn2.grad_x,
                                               block.conv2.stride, block.conv2.pad);
  grads[prefix + ".conv2.kernel"] = std::move(dconv2.grad_kernel);
  const Tensor<Scalar> dr1 = relu_backward(dconv2.grad_x, cache.relu1);
  BnGrads<Scalar> dbn1 = batchnorm2d_backward(dr1, cache.bn1, block.bn1.gain);
  grads[prefix + ".bn1.gain"] = std::move(dbn1.grad_gain);
  grads[prefix + ".bn1.bias"] = std::move(dbn1.grad_bias);
  Conv2dGrads<Scalar> dconv1 = conv2d_backward(cache.input, block.conv1.kernel, dbn1.grad_x,
                                               block.conv1.stride, block.conv1.pad);
  grads[prefix + ".conv1.kernel"] = std::move(dconv1.grad_kernel);
  Tensor<Scalar> dx = std::move(dconv1.grad_x);

  // Shortcut path adds its own contribution to dx.
  if (block.projected) {
    BnGrads<Scalar> dpbn = batchnorm2d_backward(d_add, cache.proj_bn, block.proj_bn.gain);
    grads[prefix + ".proj_bn.gain"] = std::move(dpbn.grad_gain);
    grads[prefix + ".proj_bn.bias"] = std::move(dpbn.grad_bias);
    Conv2dGrads<Scalar> dproj = conv2d_backward(cache.input, block.proj.kernel, dpbn.grad_x,
                                                block.proj.stride, block.proj.pad);
    grads[prefix + ".proj.kernel"] = std::move(dproj.grad_kernel);
    for (std::size_t i = 0; i < dx.values.size(); ++i) dx.values[i] += dproj.grad_x.values[i];
  } else {
    for (std::size_t i = 0; i < dx.values.size(); ++i) dx.values[i] += d_add.values[i];
  }
  return dx;
}

// Stem -> residual stages -> global average pool -> linear head.
// Train mode updates batch-norm running stats as a side effect.
template <class Scalar>
Tensor<Scalar> model_forward(Model<Scalar>& model, const Tensor<Scalar>& batch, Mode mode,
                             ModelCache<Scalar>* cache = nullptr) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != model.spec.input_height ||
      batch.dim(3) != model.spec.input_width)
    throw Error(Error::Code::shape_mismatch,
                "model_forward: batch " + shape_string(batch) + " does not match spec input 1x" +
                    std::to_string(model.spec.input_height) + "x" +
                    std::to_string(model.spec.input_width));

  const Scalar momentum = static_cast<Scalar>(kBnMomentum);
  const Scalar epsilon = static_cast<Scalar>(kBnEpsilon);

  Tensor<Scalar> h = conv2d_forward(batch, model.stem.kernel, model.stem.stride, model.stem.pad);
  h = batchnorm2d(h, model.stem_bn.gain, model.stem_bn.bias, model.stem_bn.running_mean,
                  model.stem_bn.running_var, mode, momentum, epsilon,
                  cache ? &cache->stem_bn : nullptr);
  h = relu(h);

  if (cache) cache->blocks.resize(model.blocks.size());
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    if (cache) {
      cache->blocks[i].input = std::move(h);
      h = residual_block_forward(model.blocks[i], cache->blocks[i].input, mode, &cache->blocks[i]);
    } else {
      h = residual_block_forward<Scalar>(model.blocks[i], h, mode, nullptr);
    }
  }
  if (cache) cache->final_output = std::move(h);
  const Tensor<Scalar>& features = cache ? cache->final_output : h;

  Tensor<Scalar> pooled = global_avg_pool(features);
  Tensor<Scalar> logits = linear_forward(pooled, model.head_weight, model.head_bias);
  if (cache) cache->pooled = std::move(pooled);
  return logits;
}

template <class Scalar>
struct BackwardResult {
  double loss = 0.0;
  std::map<std::string, Tensor<Scalar>> grads;
};

// Train-mode forward, cross-entropy loss, and gradients for every trainable
// parameter (keys match trainable_parameters).
template <class Scalar>
BackwardResult<Scalar> model_backward(Model<Scalar>& model, const Tensor<Scalar>& batch,
                                      const std::vector<Index>& labels) {
  ModelCache<Scalar> cache;
  const Tensor<Scalar> logits = model_forward(model, batch, Mode::train, &cache);
  SoftmaxResult<Scalar> sce = softmax_cross_entropy(logits, labels);

  BackwardResult<Scalar> result;
  result.loss = sce.loss;

  LinearGrads<Scalar> dhead = linear_backward(cache.pooled, model.head_weight, sce.grad_logits);
  result.grads["head.weight"] = std::move(dhead.grad_weight);
  result.grads["head.bias"] = std::move(dhead.grad_bias);
  Tensor<Scalar> dy = global_avg_pool_backward(dhead.grad_x, cache.final_output.dim(2),
                                               cache.final_output.dim(3));

  for (std::size_t i = model.blocks.size(); i-- > 0;) {
    const Tensor<Scalar>& out =
        i + 1 < model.blocks.size() ? cache.blocks[i + 1].input : cache.final_output;
    dy = residual_block_backward(model.blocks[i], cache.blocks[i], out, dy, model.block_names[i],
                                 result.grads);
  }

  // Stem: relu -> bn -> conv; the image gradient itself is not needed.
  dy = relu_backward(dy, cache.blocks.empty() ? cache.final_output : cache.blocks[0].input);
  BnGrads<Scalar> dbn = batchnorm2d_backward(dy, cache.stem_bn, model.stem_bn.gain);
  result.grads["stem.bn.gain"] = std::move(dbn.grad_gain);
  result.grads["stem.bn.bias"] = std::move(dbn.grad_bias);
  Conv2dGrads<Scalar> dconv = conv2d_backward(batch, model.stem.kernel, dbn.grad_x,
                                              model.stem.stride, model.stem.pad,
                                              /*need_grad_x=*/false);
  result.grads["stem.conv.kernel"] = std::move(dconv.grad_kernel);
  return result;
}

// Total number of scalar values across all named parameters.
template <class Scalar>
Index parameter_count(Model<Scalar>& model) {
  Index n = 0;
  for (const auto& [name, tensor] : named_parameters(model)) n += tensor->numel();
  return n;
}

}  // namespace lifas
