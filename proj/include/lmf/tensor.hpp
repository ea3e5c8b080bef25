#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lmf/errors.hpp"

namespace lmf {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;
using Shape = std::vector<Index>;

// Explicit-path guard rails: fail fast instead of exhausting memory.
inline constexpr int kMaxTensorOrder = 6;
inline constexpr std::int64_t kMaxTensorEntries = 100'000'000;

// Counts elements allocated through DenseTensor construction. Tests use it
// to show the factorized fusion path never materializes an order-M buffer.
inline std::atomic<std::int64_t>& tensor_entries_allocated() {
  static std::atomic<std::int64_t> counter{0};
  return counter;
}

inline std::int64_t shape_entry_count(const Shape& shape) {
  std::int64_t n = 1;
  for (Index d : shape) n *= static_cast<std::int64_t>(d);
  return n;
}

// Dense order-M array, row-major (last index fastest).
template <typename Scalar>
class DenseTensor {
 public:
  DenseTensor(Shape shape, VectorX<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate();
    tensor_entries_allocated() += data_.size();
  }

  static DenseTensor zeros(Shape shape) {
    check_shape(shape);
    return DenseTensor(std::move(shape));
  }

  const Shape& shape() const { return shape_; }
  int order() const { return static_cast<int>(shape_.size()); }
  Index size() const { return data_.size(); }
  const VectorX<Scalar>& data() const { return data_; }
  VectorX<Scalar>& data() { return data_; }

  Index flatten(const std::vector<Index>& idx) const {
    Index flat = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) flat = flat * shape_[a] + idx[a];
    return flat;
  }

  std::vector<Index> unflatten(Index flat) const {
    std::vector<Index> idx(shape_.size());
    for (std::size_t a = shape_.size(); a-- > 0;) {
      idx[a] = flat % shape_[a];
      flat /= shape_[a];
    }
    return idx;
  }

  Scalar operator()(const std::vector<Index>& idx) const { return data_[flatten(idx)]; }
  Scalar& operator()(const std::vector<Index>& idx) { return data_[flatten(idx)]; }

  bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

 private:
  explicit DenseTensor(Shape shape)
      : shape_(std::move(shape)), data_(VectorX<Scalar>::Zero(shape_entry_count(shape_))) {
    validate();
    tensor_entries_allocated() += data_.size();
  }

  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeMismatch("tensor order must be >= 1");
    if (static_cast<int>(shape.size()) > kMaxTensorOrder)
      throw OrderTooLarge("tensor order " + std::to_string(shape.size()) + " exceeds cap " +
                          std::to_string(kMaxTensorOrder));
    for (Index d : shape)
      if (d < 1) throw ShapeMismatch("every tensor dimension must be >= 1");
    if (shape_entry_count(shape) > kMaxTensorEntries)
      throw SizeTooLarge("explicit tensor of " + std::to_string(shape_entry_count(shape)) +
                         " entries exceeds cap " + std::to_string(kMaxTensorEntries));
  }

  void validate() const {
    check_shape(shape_);
    if (data_.size() != shape_entry_count(shape_))
      throw ShapeMismatch("data length does not match product of shape entries");
  }

  Shape shape_;
  VectorX<Scalar> data_;
};

// One modality's vector representation z_m.
template <typename Scalar>
struct ModalVector {
  ModalVector(VectorX<Scalar> v, int modality_index) : values(std::move(v)), modality(modality_index) {
    if (values.size() < 1) throw DimensionMismatch("modal vector must be nonempty");
  }

  VectorX<Scalar> values;
  int modality = 0;
};

// Appends the constant 1 at the end, so the outer product carries all
// unimodal and cross-modal interaction terms.
template <typename Scalar>
ModalVector<Scalar> append_one(const ModalVector<Scalar>& z) {
  VectorX<Scalar> out(z.values.size() + 1);
  out.head(z.values.size()) = z.values;
  out[z.values.size()] = Scalar(1);
  return ModalVector<Scalar>(std::move(out), z.modality);
}

// Full weight of the explicit fusion layer: d_h order-M slices plus bias.
template <typename Scalar>
struct WeightTensor {
  WeightTensor(std::vector<DenseTensor<Scalar>> s, VectorX<Scalar> b)
      : slices(std::move(s)), bias(std::move(b)) {
    if (slices.empty()) throw ShapeMismatch("weight tensor needs at least one slice");
    if (static_cast<Index>(slices.size()) != bias.size())
      throw ShapeMismatch("slice count must equal bias length");
    for (const auto& sl : slices)
      if (!sl.same_shape(slices.front())) throw ShapeMismatch("all weight slices must share one shape");
  }

  std::vector<DenseTensor<Scalar>> slices;
  VectorX<Scalar> bias;

  const Shape& slice_shape() const { return slices.front().shape(); }
  Index output_dim() const { return bias.size(); }
};

// Z = z_1 ⊗ z_2 ⊗ ... ⊗ z_M, row-major.
template <typename Scalar>
DenseTensor<Scalar> outer_product(const std::vector<ModalVector<Scalar>>& inputs) {
  if (inputs.empty()) throw DimensionMismatch("outer product needs at least one input");
  if (static_cast<int>(inputs.size()) > kMaxTensorOrder)
    throw OrderTooLarge("outer product order " + std::to_string(inputs.size()) + " exceeds cap " +
                        std::to_string(kMaxTensorOrder));

  Shape shape;
  shape.reserve(inputs.size());
  std::int64_t total = 1;
  for (const auto& z : inputs) {
    shape.push_back(z.values.size());
    total *= static_cast<std::int64_t>(z.values.size());
    if (total > kMaxTensorEntries)
      throw SizeTooLarge("outer product of " + std::to_string(total) + " entries exceeds cap");
  }

  VectorX<Scalar> acc = inputs.front().values;
  for (std::size_t m = 1; m < inputs.size(); ++m) {
    const VectorX<Scalar>& z = inputs[m].values;
    // Kronecker step keeps the row-major convention: the newest index is fastest.
    MatrixX<Scalar> block = acc * z.transpose();
    acc = block.transpose().reshaped();
  }
  return DenseTensor<Scalar>(std::move(shape), std::move(acc));
}

// h_k = <slice_k, Z> + b_k: the explicit linear layer over the fused tensor.
template <typename Scalar>
VectorX<Scalar> tensor_linear(const WeightTensor<Scalar>& w, const DenseTensor<Scalar>& z) {
  for (const auto& slice : w.slices)
    if (slice.shape() != z.shape())
      throw ShapeMismatch("weight slice shape does not match input tensor shape");
  VectorX<Scalar> h(w.output_dim());
  for (Index k = 0; k < w.output_dim(); ++k) h[k] = w.slices[k].data().dot(z.data()) + w.bias[k];
  return h;
}

}  // namespace lmf
