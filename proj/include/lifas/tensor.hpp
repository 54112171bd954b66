#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "lifas/common.hpp"

namespace lifas {

// Dense tensor, row-major flat storage. Rank 1, 2, or 4 in practice (vectors,
// matrices, NCHW activations / KCHW kernels).
template <class Scalar>
struct Tensor {
  std::vector<Index> dims;
  std::vector<Scalar> values;

  Tensor() = default;

  explicit Tensor(std::vector<Index> d) : dims(std::move(d)) {
    Index n = 1;
    for (const Index dim : dims) {
      if (dim <= 0)
        throw Error(Error::Code::shape_mismatch,
                    "Tensor: dimension " + std::to_string(dim) + " must be positive");
      n *= dim;
    }
    values.assign(static_cast<std::size_t>(n), Scalar(0));
  }

  Index numel() const { return static_cast<Index>(values.size()); }
  int rank() const { return static_cast<int>(dims.size()); }
  Index dim(int i) const { return dims[static_cast<std::size_t>(i)]; }

  Scalar* data() { return values.data(); }
  const Scalar* data() const { return values.data(); }

  // 4-d accessors (n, c, h, w), row-major.
  Scalar& at(Index n, Index c, Index h, Index w) {
    return values[static_cast<std::size_t>(((n * dims[1] + c) * dims[2] + h) * dims[3] + w)];
  }
  Scalar at(Index n, Index c, Index h, Index w) const {
    return values[static_cast<std::size_t>(((n * dims[1] + c) * dims[2] + h) * dims[3] + w)];
  }

  // 2-d accessors (r, c).
  Scalar& at(Index r, Index c) { return values[static_cast<std::size_t>(r * dims[1] + c)]; }
  Scalar at(Index r, Index c) const { return values[static_cast<std::size_t>(r * dims[1] + c)]; }

  bool same_shape(const Tensor& other) const { return dims == other.dims; }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.dims = dims;
    out.values.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      out.values[i] = static_cast<Other>(values[i]);
    return out;
  }
};

template <class Scalar>
std::string shape_string(const Tensor<Scalar>& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.dims.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.dims[i]);
  }
  return s + ")";
}

template <class Scalar>
void check_shape(const Tensor<Scalar>& t, const std::vector<Index>& dims, const char* what) {
  if (t.dims != dims) {
    Tensor<Scalar> want;
    want.dims = dims;
    throw Error(Error::Code::shape_mismatch,
                std::string(what) + ": expected shape " + shape_string(want) + ", got " +
                    shape_string(t));
  }
}

// Eigen views over the flat storage.
template <class Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
Eigen::Map<MatrixR<Scalar>> as_matrix(Tensor<Scalar>& t, Index rows, Index cols) {
  return Eigen::Map<MatrixR<Scalar>>(t.data(), rows, cols);
}

template <class Scalar>
Eigen::Map<const MatrixR<Scalar>> as_matrix(const Tensor<Scalar>& t, Index rows, Index cols) {
  return Eigen::Map<const MatrixR<Scalar>>(t.data(), rows, cols);
}

}  // namespace lifas
