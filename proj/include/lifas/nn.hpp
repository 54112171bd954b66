#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lifas/common.hpp"
#include "lifas/tensor.hpp"

namespace lifas {

enum class Mode { train, eval };

namespace detail {

inline Index conv_out_extent(Index in, Index k, Index stride, Index pad) {
  const Index out = (in + 2 * pad - k) / stride + 1;
  if (in + 2 * pad < k || out < 1)
    throw Error(Error::Code::shape_mismatch,
                "conv2d: input extent " + std::to_string(in) + " too small for kernel " +
                    std::to_string(k) + " with pad " + std::to_string(pad));
  return out;
}

// Patch matrix for one image: column p = (oh*W_out + ow) holds the receptive
// field of output pixel p, rows ordered (c, ky, kx). Zero outside the input.
template <class Scalar>
void im2col(const Scalar* x, Index C, Index H, Index W, Index k, Index stride, Index pad,
            Index H_out, Index W_out,
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cols) {
  cols.resize(C * k * k, H_out * W_out);
  for (Index oh = 0; oh < H_out; ++oh) {
    for (Index ow = 0; ow < W_out; ++ow) {
      Scalar* col = cols.data() + (oh * W_out + ow) * cols.rows();
      Index r = 0;
      for (Index c = 0; c < C; ++c) {
        const Scalar* plane = x + c * H * W;
        for (Index ky = 0; ky < k; ++ky) {
          const Index ih = oh * stride - pad + ky;
          if (ih < 0 || ih >= H) {
            for (Index kx = 0; kx < k; ++kx) col[r++] = Scalar(0);
            continue;
          }
          const Scalar* row = plane + ih * W;
          for (Index kx = 0; kx < k; ++kx) {
            const Index iw = ow * stride - pad + kx;
            col[r++] = (iw < 0 || iw >= W) ? Scalar(0) : row[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch gradients back onto the image.
template <class Scalar>
void col2im_add(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& cols, Index C,
                Index H, Index W, Index k, Index stride, Index pad, Index H_out, Index W_out,
                Scalar* dx) {
  for (Index oh = 0; oh < H_out; ++oh) {
    for (Index ow = 0; ow < W_out; ++ow) {
      const Scalar* col = cols.data() + (oh * W_out + ow) * cols.rows();
      Index r = 0;
      for (Index c = 0; c < C; ++c) {
        Scalar* plane = dx + c * H * W;
        for (Index ky = 0; ky < k; ++ky) {
          const Index ih = oh * stride - pad + ky;
          if (ih < 0 || ih >= H) {
            r += k;
            continue;
          }
          Scalar* row = plane + ih * W;
          for (Index kx = 0; kx < k; ++kx) {
            const Index iw = ow * stride - pad + kx;
            if (iw >= 0 && iw < W) row[iw] += col[r];
            ++r;
          }
        }
      }
    }
  }
}

template <class Scalar>
void check_conv_args(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, int stride, int pad) {
  if (x.rank() != 4 || kernel.rank() != 4)
    throw Error(Error::Code::shape_mismatch, "conv2d: input and kernel must be rank 4");
  if (kernel.dim(2) != kernel.dim(3))
    throw Error(Error::Code::shape_mismatch, "conv2d: kernel must be square");
  if (kernel.dim(1) != x.dim(1))
    throw Error(Error::Code::shape_mismatch,
                "conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " channels, input has " +
                    std::to_string(x.dim(1)));
  if (stride < 1 || pad < 0)
    throw Error(Error::Code::shape_mismatch, "conv2d: need stride >= 1 and pad >= 0");
}

}  // namespace detail

// Cross-correlation with zero padding, NCHW x and KCkk kernel, no bias term
// (batch norm follows every convolution in this network).
template <class Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel, int stride,
                              int pad) {
  detail::check_conv_args(x, kernel, stride, pad);
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index K = kernel.dim(0), k = kernel.dim(2);
  const Index H_out = detail::conv_out_extent(H, k, stride, pad);
  const Index W_out = detail::conv_out_extent(W, k, stride, pad);
  const Index P = H_out * W_out;

  Tensor<Scalar> out({N, K, H_out, W_out});
  const auto kernel_mat = as_matrix(kernel, K, C * k * k);
  parallel_for(N, [&](Index n) {
    thread_local Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cols;
    detail::im2col(x.data() + n * C * H * W, C, H, W, k, stride, pad, H_out, W_out, cols);
    Eigen::Map<MatrixR<Scalar>> out_mat(out.data() + n * K * P, K, P);
    out_mat.noalias() = kernel_mat * cols;
  });
  return out;
}

template <class Scalar>
struct Conv2dGrads {
  Tensor<Scalar> grad_x;
  Tensor<Scalar> grad_kernel;
};

// Exact gradients of conv2d_forward. grad_x computation can be skipped for
// the first layer of a network, where nothing consumes it.
template <class Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel,
                                    const Tensor<Scalar>& grad_out, int stride, int pad,
                                    bool need_grad_x = true) {
  detail::check_conv_args(x, kernel, stride, pad);
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index K = kernel.dim(0), k = kernel.dim(2);
  const Index H_out = detail::conv_out_extent(H, k, stride, pad);
  const Index W_out = detail::conv_out_extent(W, k, stride, pad);
  const Index P = H_out * W_out;
  check_shape(grad_out, {N, K, H_out, W_out}, "conv2d_backward: grad_out");

  Conv2dGrads<Scalar> grads;
  grads.grad_kernel = Tensor<Scalar>(kernel.dims);
  if (need_grad_x) grads.grad_x = Tensor<Scalar>(x.dims);

  // Kernel-gradient contributions are kept per image and reduced in batch
  // order afterwards, so the result is independent of the thread count.
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> partials(
      static_cast<std::size_t>(N));
  const auto kernel_mat = as_matrix(kernel, K, C * k * k);
  parallel_for(N, [&](Index n) {
    thread_local Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cols, dcols;
    detail::im2col(x.data() + n * C * H * W, C, H, W, k, stride, pad, H_out, W_out, cols);
    Eigen::Map<const MatrixR<Scalar>> dout_mat(grad_out.data() + n * K * P, K, P);
    partials[static_cast<std::size_t>(n)].noalias() = dout_mat * cols.transpose();
    if (need_grad_x) {
      dcols.noalias() = kernel_mat.transpose() * dout_mat;
      detail::col2im_add(dcols, C, H, W, k, stride, pad, H_out, W_out,
                         grads.grad_x.data() + n * C * H * W);
    }
  });
  auto gk = as_matrix(grads.grad_kernel, K, C * k * k);
  for (Index n = 0; n < N; ++n) gk += partials[static_cast<std::size_t>(n)];
  return grads;
}

template <class Scalar>
struct BnCache {
  Tensor<Scalar> xhat;          // normalized input
  std::vector<Scalar> invstd;   // per channel
};

// Batch normalization over (N, H, W) per channel. Train mode normalizes by
// batch statistics and updates running stats in place; eval mode normalizes
// by the running stats and touches nothing.
template <class Scalar>
Tensor<Scalar> batchnorm2d(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                           const Tensor<Scalar>& bias, Tensor<Scalar>& running_mean,
                           Tensor<Scalar>& running_var, Mode mode, Scalar momentum,
                           Scalar epsilon, BnCache<Scalar>* cache = nullptr) {
  if (x.rank() != 4) throw Error(Error::Code::shape_mismatch, "batchnorm2d: input must be rank 4");
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check_shape(gain, {C}, "batchnorm2d: gain");
  check_shape(bias, {C}, "batchnorm2d: bias");
  check_shape(running_mean, {C}, "batchnorm2d: running_mean");
  check_shape(running_var, {C}, "batchnorm2d: running_var");

  const Index plane = H * W;
  Tensor<Scalar> y(x.dims);

  if (mode == Mode::eval) {
    std::vector<Scalar> scale(static_cast<std::size_t>(C)), shift(static_cast<std::size_t>(C));
    for (Index c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var.values[std::size_t(c)]) +
                                         static_cast<double>(epsilon));
      scale[std::size_t(c)] = static_cast<Scalar>(static_cast<double>(gain.values[std::size_t(c)]) * inv);
      shift[std::size_t(c)] = static_cast<Scalar>(
          static_cast<double>(bias.values[std::size_t(c)]) -
          static_cast<double>(running_mean.values[std::size_t(c)]) * static_cast<double>(gain.values[std::size_t(c)]) * inv);
    }
    parallel_for(N, [&](Index n) {
      for (Index c = 0; c < C; ++c) {
        const Scalar* src = x.data() + (n * C + c) * plane;
        Scalar* dst = y.data() + (n * C + c) * plane;
        for (Index i = 0; i < plane; ++i) dst[i] = src[i] * scale[std::size_t(c)] + shift[std::size_t(c)];
      }
    });
    return y;
  }

  const Index M = N * plane;
  if (M < 2)
    throw Error(Error::Code::shape_mismatch, "batchnorm2d: train mode needs more than one value per channel");

  // Per-image partial sums in double, combined in batch order: the statistics
  // are bitwise independent of the thread count.
  std::vector<double> part_sum(static_cast<std::size_t>(N * C), 0.0);
  std::vector<double> part_sq(static_cast<std::size_t>(N * C), 0.0);
  parallel_for(N, [&](Index n) {
    for (Index c = 0; c < C; ++c) {
      const Scalar* src = x.data() + (n * C + c) * plane;
      double s = 0.0, q = 0.0;
      for (Index i = 0; i < plane; ++i) {
        const double v = static_cast<double>(src[i]);
        s += v;
        q += v * v;
      }
      part_sum[static_cast<std::size_t>(n * C + c)] = s;
      part_sq[static_cast<std::size_t>(n * C + c)] = q;
    }
  });

  std::vector<Scalar> mean_s(static_cast<std::size_t>(C)), invstd_s(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) {
    double s = 0.0, q = 0.0;
    for (Index n = 0; n < N; ++n) {
      s += part_sum[static_cast<std::size_t>(n * C + c)];
      q += part_sq[static_cast<std::size_t>(n * C + c)];
    }
    const double mean = s / static_cast<double>(M);
    const double var = std::max(q / static_cast<double>(M) - mean * mean, 0.0);
    mean_s[std::size_t(c)] = static_cast<Scalar>(mean);
    invstd_s[std::size_t(c)] =
        static_cast<Scalar>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));

    const double unbiased = var * static_cast<double>(M) / static_cast<double>(M - 1);
    running_mean.values[std::size_t(c)] = static_cast<Scalar>(
        (1.0 - static_cast<double>(momentum)) * static_cast<double>(running_mean.values[std::size_t(c)]) +
        static_cast<double>(momentum) * mean);
    running_var.values[std::size_t(c)] = static_cast<Scalar>(
        (1.0 - static_cast<double>(momentum)) * static_cast<double>(running_var.values[std::size_t(c)]) +
        static_cast<double>(momentum) * unbiased);
  }

  Tensor<Scalar> xhat(x.dims);
  parallel_for(N, [&](Index n) {
    for (Index c = 0; c < C; ++c) {
      const Scalar* src = x.data() + (n * C + c) * plane;
      Scalar* xh = xhat.data() + (n * C + c) * plane;
      Scalar* dst = y.data() + (n * C + c) * plane;
      const Scalar m = mean_s[std::size_t(c)], is = invstd_s[std::size_t(c)];
      const Scalar g = gain.values[std::size_t(c)], b = bias.values[std::size_t(c)];
      for (Index i = 0; i < plane; ++i) {
        const Scalar h = (src[i] - m) * is;
        xh[i] = h;
        dst[i] = g * h + b;
      }
    }
  });

  if (cache) {
    cache->xhat = std::move(xhat);
    cache->invstd.assign(invstd_s.begin(), invstd_s.end());
  }
  return y;
}

template <class Scalar>
struct BnGrads {
  Tensor<Scalar> grad_x;
  Tensor<Scalar> grad_gain;
  Tensor<Scalar> grad_bias;
};

template <class Scalar>
BnGrads<Scalar> batchnorm2d_backward(const Tensor<Scalar>& grad_out, const BnCache<Scalar>& cache,
                                     const Tensor<Scalar>& gain) {
  const Tensor<Scalar>& xhat = cache.xhat;
  if (!grad_out.same_shape(xhat))
    throw Error(Error::Code::shape_mismatch, "batchnorm2d_backward: grad_out shape mismatch");
  const Index N = xhat.dim(0), C = xhat.dim(1), plane = xhat.dim(2) * xhat.dim(3);
  const Index M = N * plane;

  std::vector<double> part_db(static_cast<std::size_t>(N * C), 0.0);
  std::vector<double> part_dg(static_cast<std::size_t>(N * C), 0.0);
  parallel_for(N, [&](Index n) {
    for (Index c = 0; c < C; ++c) {
      const Scalar* dy = grad_out.data() + (n * C + c) * plane;
      const Scalar* xh = xhat.data() + (n * C + c) * plane;
      double db = 0.0, dg = 0.0;
      for (Index i = 0; i < plane; ++i) {
        db += static_cast<double>(dy[i]);
        dg += static_cast<double>(dy[i]) * static_cast<double>(xh[i]);
      }
      part_db[static_cast<std::size_t>(n * C + c)] = db;
      part_dg[static_cast<std::size_t>(n * C + c)] = dg;
    }
  });

  BnGrads<Scalar> grads;
  grads.grad_x = Tensor<Scalar>(xhat.dims);
  grads.grad_gain = Tensor<Scalar>({C});
  grads.grad_bias = Tensor<Scalar>({C});

  std::vector<Scalar> k1(static_cast<std::size_t>(C)), k2(static_cast<std::size_t>(C)),
      k3(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) {
    double db = 0.0, dg = 0.0;
    for (Index n = 0; n < N; ++n) {
      db += part_db[static_cast<std::size_t>(n * C + c)];
      dg += part_dg[static_cast<std::size_t>(n * C + c)];
    }
    grads.grad_bias.values[std::size_t(c)] = static_cast<Scalar>(db);
    grads.grad_gain.values[std::size_t(c)] = static_cast<Scalar>(dg);
    // dx = gain*invstd * (dy - mean(dy) - xhat * mean(dy*xhat))
    k1[std::size_t(c)] = static_cast<Scalar>(static_cast<double>(gain.values[std::size_t(c)]) *
                                        static_cast<double>(cache.invstd[std::size_t(c)]));
    k2[std::size_t(c)] = static_cast<Scalar>(db / static_cast<double>(M));
    k3[std::size_t(c)] = static_cast<Scalar>(dg / static_cast<double>(M));
  }

  parallel_for(N, [&](Index n) {
    for (Index c = 0; c < C; ++c) {
      const Scalar* dy = grad_out.data() + (n * C + c) * plane;
      const Scalar* xh = xhat.data() + (n * C + c) * plane;
      Scalar* dx = grads.grad_x.data() + (n * C + c) * plane;
      for (Index i = 0; i < plane; ++i)
        dx[i] = k1[std::size_t(c)] * (dy[i] - k2[std::size_t(c)] - xh[i] * k3[std::size_t(c)]);
    }
  });
  return grads;
}

template <class Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y;
  y.dims = x.dims;
  y.values.resize(x.values.size());
  for (std::size_t i = 0; i < x.values.size(); ++i)
    y.values[i] = x.values[i] > Scalar(0) ? x.values[i] : Scalar(0);
  return y;
}

// Uses the forward *output* for the mask; identical to masking on the input
// since relu(x) > 0 exactly when x > 0.
template <class Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& output) {
  if (!grad_out.same_shape(output))
    throw Error(Error::Code::shape_mismatch, "relu_backward: shape mismatch");
  Tensor<Scalar> dx;
  dx.dims = grad_out.dims;
  dx.values.resize(grad_out.values.size());
  for (std::size_t i = 0; i < grad_out.values.size(); ++i)
    dx.values[i] = output.values[i] > Scalar(0) ? grad_out.values[i] : Scalar(0);
  return dx;
}

// (N, C, H, W) -> (N, C), mean over the spatial plane.
template <class Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& x) {
  if (x.rank() != 4)
    throw Error(Error::Code::shape_mismatch, "global_avg_pool: input must be rank 4");
  const Index N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<Scalar> y({N, C});
  parallel_for(N, [&](Index n) {
    for (Index c = 0; c < C; ++c) {
      const Scalar* src = x.data() + (n * C + c) * plane;
      double s = 0.0;
      for (Index i = 0; i < plane; ++i) s += static_cast<double>(src[i]);
      y.at(n, c) = static_cast<Scalar>(s / static_cast<double>(plane));
    }
  });
  return y;
}

template <class Scalar>
Tensor<Scalar> global_avg_pool_backward(const Tensor<Scalar>& grad_out, Index H, Index W) {
  if (grad_out.rank() != 2)
    throw Error(Error::Code::shape_mismatch, "global_avg_pool_backward: grad must be rank 2");
  const Index N = grad_out.dim(0), C = grad_out.dim(1);
  Tensor<Scalar> dx({N, C, H, W});
  const Scalar inv = Scalar(1) / static_cast<Scalar>(H * W);
  parallel_for(N, [&](Index n) {
    for (Index c = 0; c < C; ++c) {
      const Scalar g = grad_out.at(n, c) * inv;
      Scalar* dst = dx.data() + (n * C + c) * H * W;
      for (Index i = 0; i < H * W; ++i) dst[i] = g;
    }
  });
  return dx;
}

// y = x * weight^T + bias, x (N, F), weight (K, F), bias (K).
template <class Scalar>
Tensor<Scalar> linear_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias) {
  if (x.rank() != 2 || weight.rank() != 2)
    throw Error(Error::Code::shape_mismatch, "linear: input and weight must be rank 2");
  const Index N = x.dim(0), F = x.dim(1), K = weight.dim(0);
  if (weight.dim(1) != F)
    throw Error(Error::Code::shape_mismatch,
                "linear: weight expects " + std::to_string(weight.dim(1)) + " features, input has " +
                    std::to_string(F));
  check_shape(bias, {K}, "linear: bias");

  Tensor<Scalar> y({N, K});
  auto y_mat = as_matrix(y, N, K);
  y_mat.noalias() = as_matrix(x, N, F) * as_matrix(weight, K, F).transpose();
  for (Index n = 0; n < N; ++n)
    for (Index k = 0; k < K; ++k) y.at(n, k) += bias.values[static_cast<std::size_t>(k)];
  return y;
}

template <class Scalar>
struct LinearGrads {
  Tensor<Scalar> grad_x;
  Tensor<Scalar> grad_weight;
  Tensor<Scalar> grad_bias;
};

template <class Scalar>
LinearGrads<Scalar> linear_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                    const Tensor<Scalar>& grad_out) {
  const Index N = x.dim(0), F = x.dim(1), K = weight.dim(0);
  check_shape(grad_out, {N, K}, "linear_backward: grad_out");

  LinearGrads<Scalar> grads;
  grads.grad_x = Tensor<Scalar>({N, F});
  grads.grad_weight = Tensor<Scalar>({K, F});
  grads.grad_bias = Tensor<Scalar>({K});
  as_matrix(grads.grad_weight, K, F).noalias() =
      as_matrix(grad_out, N, K).transpose() * as_matrix(x, N, F);
  as_matrix(grads.grad_x, N, F).noalias() = as_matrix(grad_out, N, K) * as_matrix(weight, K, F);
  for (Index k = 0; k < K; ++k) {
    double s = 0.0;
    for (Index n = 0; n < N; ++n) s += static_cast<double>(grad_out.at(n, k));
    grads.grad_bias.values[static_cast<std::size_t>(k)] = static_cast<Scalar>(s);
  }
  return grads;
}

template <class Scalar>
struct SoftmaxResult {
  double loss = 0.0;
  Tensor<Scalar> grad_logits;
};

// Mean negative log-likelihood with the log-sum-exp trick;
// grad = (softmax - onehot) / batch_size.
template <class Scalar>
SoftmaxResult<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                            const std::vector<Index>& labels) {
  if (logits.rank() != 2)
    throw Error(Error::Code::shape_mismatch, "softmax_cross_entropy: logits must be rank 2");
  const Index N = logits.dim(0), K = logits.dim(1);
  if (static_cast<Index>(labels.size()) != N)
    throw Error(Error::Code::shape_mismatch,
                "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                    std::to_string(N));

  SoftmaxResult<Scalar> result;
  result.grad_logits = Tensor<Scalar>({N, K});
  double loss_sum = 0.0;
  for (Index n = 0; n < N; ++n) {
    const Index label = labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= K)
      throw Error(Error::Code::bad_argument,
                  "softmax_cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(K) + ")");
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < K; ++k)
      max_logit = std::max(max_logit, static_cast<double>(logits.at(n, k)));
    double sum_exp = 0.0;
    for (Index k = 0; k < K; ++k)
      sum_exp += std::exp(static_cast<double>(logits.at(n, k)) - max_logit);
    const double lse = max_logit + std::log(sum_exp);
    loss_sum += lse - static_cast<double>(logits.at(n, label));
    for (Index k = 0; k < K; ++k) {
      const double p = std::exp(static_cast<double>(logits.at(n, k)) - lse);
      result.grad_logits.at(n, k) =
          static_cast<Scalar>((p - (k == label ? 1.0 : 0.0)) / static_cast<double>(N));
    }
  }
  result.loss = loss_sum / static_cast<double>(N);
  return result;
}

}  // namespace lifas
