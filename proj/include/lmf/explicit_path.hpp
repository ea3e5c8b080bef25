#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lmf/errors.hpp"
#include "lmf/tensor.hpp"

namespace lmf {

template <typename Scalar>
using RowMajorMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Contracts the last mode of a row-major tensor buffer with v.
template <typename Scalar>
VectorX<Scalar> contract_last_mode(const VectorX<Scalar>& data, Index last_dim, const VectorX<Scalar>& v) {
  RowMajorMap<Scalar> m(data.data(), data.size() / last_dim, last_dim);
  return m * v;
}

// Contracts the first mode of a row-major tensor buffer with v.
template <typename Scalar>
VectorX<Scalar> contract_first_mode(const VectorX<Scalar>& data, Index first_dim, const VectorX<Scalar>& v) {
  RowMajorMap<Scalar> m(data.data(), first_dim, data.size() / first_dim);
  return m.transpose() * v;
}

template <typename Scalar>
struct ExplicitGradients {
  std::vector<DenseTensor<Scalar>> d_slices;
  VectorX<Scalar> d_bias;
  std::vector<VectorX<Scalar>> d_inputs;
};

// Gradients of h = tensor_linear(w, outer_product(zs)) given d(loss)/dh.
// dW_k = upstream_k * Z, db = upstream, and each dz_m is dZ with every
// other mode contracted against its input vector.
template <typename Scalar>
ExplicitGradients<Scalar> explicit_backward(const WeightTensor<Scalar>& w,
                                            const std::vector<ModalVector<Scalar>>& inputs,
                                            const DenseTensor<Scalar>& z_tensor,
                                            const VectorX<Scalar>& upstream) {
  if (upstream.size() != w.output_dim()) throw ShapeMismatch("upstream length must equal output dim");
  const int M = static_cast<int>(inputs.size());
  const Shape& shape = z_tensor.shape();

  ExplicitGradients<Scalar> grad;
  grad.d_bias = upstream;
  grad.d_slices.reserve(w.output_dim());
  for (Index k = 0; k < w.output_dim(); ++k)
    grad.d_slices.emplace_back(shape, VectorX<Scalar>(upstream[k] * z_tensor.data()));

  VectorX<Scalar> d_z = VectorX<Scalar>::Zero(z_tensor.size());
  for (Index k = 0; k < w.output_dim(); ++k) d_z += upstream[k] * w.slices[k].data();

  grad.d_inputs.resize(M);
  for (int m = 0; m < M; ++m) {
    VectorX<Scalar> acc = d_z;
    for (int n = M; n-- > m + 1;) acc = contract_last_mode(acc, shape[n], inputs[n].values);
    for (int n = 0; n < m; ++n) acc = contract_first_mode(acc, shape[n], inputs[n].values);
    grad.d_inputs[m] = std::move(acc);
  }
  return grad;
}

}  // namespace lmf
