// Copyright 2026 The snn-rmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SNN_RMP_TENSOR_HPP_
#define SNN_RMP_TENSOR_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snn_rmp/errors.hpp"

namespace snn_rmp {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

std::string shape_to_string(std::span<const Index> shape);

// Product of the dimensions. An empty shape is a scalar with one element.
inline Index shape_size(std::span<const Index> shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

// Dense row-major tensor. Storage is a flat Eigen column array whose length
// always equals the product of the shape; reshaping never reallocates.
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMajorMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

  // Rank-0 scalar holding zero.
  BasicTensor() : data_(Array::Zero(1)) {}

  BasicTensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_ = Array::Constant(shape_size(shape_), fill);
  }

  BasicTensor(Shape shape, Array data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), from_list(values)) {}

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<size_t>(axis)); }
  Index size() const { return data_.size(); }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // Row-major 2-D view over the flat storage: [rows, size / rows].
  MatrixMap matrix(Index rows) {
    check_rows(rows);
    return MatrixMap(data_.data(), rows, data_.size() / rows);
  }
  ConstMatrixMap matrix(Index rows) const {
    check_rows(rows);
    return ConstMatrixMap(data_.data(), rows, data_.size() / rows);
  }
  // Rank-2 tensors viewed with their own shape.
  MatrixMap matrix() { return matrix(leading_rows()); }
  ConstMatrixMap matrix() const { return matrix(leading_rows()); }

  BasicTensor reshaped(Shape shape) const& {
    return BasicTensor(std::move(shape), data_);
  }
  BasicTensor reshaped(Shape shape) && {
    return BasicTensor(std::move(shape), std::move(data_));
  }

  bool same_shape(const BasicTensor& other) const {
    return shape_ == other.shape_;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (Index d : shape) {
      if (d < 1) {
        throw ShapeError("tensor dimensions must be >= 1, got " +
                         shape_to_string(shape));
      }
    }
  }

  static Array from_list(std::initializer_list<Scalar> values) {
    Array a(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) a[i++] = v;
    return a;
  }

  Index leading_rows() const {
    if (rank() != 2) {
      throw ShapeError("matrix view needs a rank-2 tensor, got " +
                       shape_to_string(shape_));
    }
    return shape_[0];
  }

  void check_rows(Index rows) const {
    if (rows < 1 || data_.size() % rows != 0) {
      throw ShapeError("cannot view " + shape_to_string(shape_) + " as " +
                       std::to_string(rows) + " rows");
    }
  }

  Shape shape_;
  Array data_;
};

using Tensor = BasicTensor<double>;

// Tensor of the given shape with every element equal to `fill`.
template <typename Scalar = double>
BasicTensor<Scalar> new_tensor(Shape shape, Scalar fill) {
  return BasicTensor<Scalar>(std::move(shape), fill);
}

template <typename Scalar>
BasicTensor<Scalar> zeros_like(const BasicTensor<Scalar>& t) {
  return BasicTensor<Scalar>(t.shape(), Scalar(0));
}

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a,
                           const BasicTensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  BasicTensor<Scalar> out({a.dim(0), b.dim(1)}, Scalar(0));
  out.matrix().noalias() = a.matrix() * b.matrix();
  return out;
}

// Elementwise map; preserves shape.
template <typename Scalar, typename F>
BasicTensor<Scalar> map(const BasicTensor<Scalar>& t, F&& f) {
  typename BasicTensor<Scalar>::Array out(t.size());
  for (Index i = 0; i < t.size(); ++i) out[i] = f(t[i]);
  return BasicTensor<Scalar>(t.shape(), std::move(out));
}

// Sum over one axis; the result drops that axis (a rank-1 input reduces to
// a rank-0 scalar).
template <typename Scalar>
BasicTensor<Scalar> reduce_sum(const BasicTensor<Scalar>& t, Index axis) {
  if (axis < 0 || axis >= t.rank()) {
    throw ShapeError("reduce_sum: axis " + std::to_string(axis) +
                     " out of range for " + shape_to_string(t.shape()));
  }
  const auto& s = t.shape();
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= s[i];
  for (Index i = axis + 1; i < t.rank(); ++i) inner *= s[i];
  const Index n = s[axis];
  Shape out_shape;
  for (Index i = 0; i < t.rank(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  BasicTensor<Scalar> out(out_shape, Scalar(0));
  for (Index o = 0; o < outer; ++o) {
    for (Index k = 0; k < n; ++k) {
      const Scalar* src = t.data() + (o * n + k) * inner;
      Scalar* dst = out.data() + o * inner;
      for (Index i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return out;
}

template <typename Scalar>
bool all_finite(const BasicTensor<Scalar>& t) {
  return t.array().isFinite().all();
}

// Throws NumericError naming `what` when any element is NaN or infinite.
template <typename Scalar>
void check_finite(const BasicTensor<Scalar>& t, const std::string& what) {
  if (!all_finite(t)) {
    throw NumericError(what + " contains non-finite values");
  }
}

// SplitMix64 generator. The whole state is one 64-bit word, so it can be
// serialized and restored exactly.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection keeps the result unbiased.
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} / n) * n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller. Draws two uniforms per call and keeps no
  // cached spare, so the state stays a single word.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

// I.i.d. normal samples in row-major order.
template <typename Scalar = double>
BasicTensor<Scalar> gauss(SeededRng& rng, Shape shape, Scalar mean,
                          Scalar stddev) {
  if (!(stddev >= 0)) {
    throw ParameterError("gauss: standard deviation must be >= 0");
  }
  BasicTensor<Scalar> out(std::move(shape), Scalar(0));
  for (Index i = 0; i < out.size(); ++i) {
    out[i] = mean + stddev * static_cast<Scalar>(rng.normal());
  }
  return out;
}

// Fisher-Yates shuffle of [0, n).
std::vector<Index> shuffled_indices(SeededRng& rng, Index n);

}  // namespace snn_rmp

#endif  // SNN_RMP_TENSOR_HPP_
