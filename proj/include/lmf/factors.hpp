#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "lmf/errors.hpp"
#include "lmf/rng.hpp"
#include "lmf/tensor.hpp"

namespace lmf {

template <typename Scalar = double>
struct FusionConfig {
  std::vector<Index> input_dims;  // d_m, before the appended 1
  Index rank = 1;
  Index output_dim = 1;  // d_h
  std::uint64_t seed = 0;
};

// Modality-specific low-rank factors in the stacked order-3 layout:
// factor m is conceptually (r, d_m+1, d_h) with the rank axis outermost.
// Stored as a (d_m+1) x (r*d_h) matrix so projecting z_m is one GEMV;
// column i*d_h + k holds rank component i, output coordinate k.
template <typename Scalar>
class FactorSet {
 public:
  FactorSet(std::vector<MatrixX<Scalar>> factors, VectorX<Scalar> bias, Index rank)
      : factors_(std::move(factors)), bias_(std::move(bias)), rank_(rank) {
    if (factors_.size() < 2) throw DimensionMismatch("a factor set needs at least two modalities");
    if (rank_ < 1) throw DimensionMismatch("rank must be >= 1");
    if (bias_.size() < 1) throw DimensionMismatch("output dim must be >= 1");
    for (const auto& f : factors_) {
      if (f.cols() != rank_ * bias_.size())
        throw DimensionMismatch("factor column count must equal rank * output_dim");
      if (f.rows() < 2) throw DimensionMismatch("factor rows must cover d_m plus the appended 1");
    }
  }

  int modalities() const { return static_cast<int>(factors_.size()); }
  Index rank() const { return rank_; }
  Index output_dim() const { return bias_.size(); }
  // Includes the appended-1 coordinate.
  Index modal_dim(int m) const { return factors_[m].rows(); }

  const MatrixX<Scalar>& factor(int m) const { return factors_[m]; }
  MatrixX<Scalar>& factor(int m) { return factors_[m]; }
  const VectorX<Scalar>& bias() const { return bias_; }
  VectorX<Scalar>& bias() { return bias_; }

  Scalar entry(int m, Index i, Index j, Index k) const { return factors_[m](j, i * output_dim() + k); }
  Scalar& entry(int m, Index i, Index j, Index k) { return factors_[m](j, i * output_dim() + k); }

 private:
  std::vector<MatrixX<Scalar>> factors_;
  VectorX<Scalar> bias_;
  Index rank_;
};

template <typename Scalar>
struct FusionOutput {
  VectorX<Scalar> values;
};

// Elements in the per-call scratch of lmf_fuse: one r x d_h projection per
// modality plus the output accumulator.
template <typename Scalar>
std::int64_t fuse_scratch_entries(const FactorSet<Scalar>& f) {
  return static_cast<std::int64_t>(f.modalities()) * f.rank() * f.output_dim() + f.output_dim();
}

namespace detail {

template <typename Scalar>
void check_fuse_inputs(const FactorSet<Scalar>& f, const std::vector<ModalVector<Scalar>>& inputs,
                       bool strict_append_one) {
  if (static_cast<int>(inputs.size()) != f.modalities())
    throw DimensionMismatch("input count does not match modality count");
  for (int m = 0; m < f.modalities(); ++m) {
    if (inputs[m].values.size() != f.modal_dim(m))
      throw DimensionMismatch("input " + std::to_string(m) + " length does not match its factor");
    if (strict_append_one && inputs[m].values[inputs[m].values.size() - 1] != Scalar(1))
      throw MissingAppendedOne("input " + std::to_string(m) + " is missing its appended 1");
  }
}

}  // namespace detail

// Factorized fusion: project each modality to an r x d_h matrix, take the
// elementwise product across modalities, sum over the rank axis, add bias.
// Never touches any order-M buffer.
template <typename Scalar>
FusionOutput<Scalar> lmf_fuse(const FactorSet<Scalar>& f, const std::vector<ModalVector<Scalar>>& inputs,
                              bool strict_append_one = true) {
  detail::check_fuse_inputs(f, inputs, strict_append_one);
  const Index r = f.rank();
  const Index dh = f.output_dim();

  // prod(i*dh + k) accumulates the Hadamard product of per-modality projections.
  VectorX<Scalar> prod = f.factor(0).transpose() * inputs[0].values;
  for (int m = 1; m < f.modalities(); ++m)
    prod.array() *= (f.factor(m).transpose() * inputs[m].values).array();

  VectorX<Scalar> h = f.bias();
  for (Index i = 0; i < r; ++i) h += prod.segment(i * dh, dh);
  return FusionOutput<Scalar>{std::move(h)};
}

// Bimodal form with the rank sum taken inside each projection before the
// elementwise product. Coincides with lmf_fuse at rank 1; kept as a separate
// path so the two orderings can be compared at higher rank.
template <typename Scalar>
FusionOutput<Scalar> lmf_fuse_bimodal(const FactorSet<Scalar>& f,
                                      const std::vector<ModalVector<Scalar>>& inputs,
                                      bool strict_append_one = true) {
  if (f.modalities() != 2) throw DimensionMismatch("bimodal fusion requires exactly two modalities");
  detail::check_fuse_inputs(f, inputs, strict_append_one);
  const Index dh = f.output_dim();

  VectorX<Scalar> pa = f.factor(0).transpose() * inputs[0].values;
  VectorX<Scalar> pv = f.factor(1).transpose() * inputs[1].values;
  VectorX<Scalar> sa = VectorX<Scalar>::Zero(dh);
  VectorX<Scalar> sv = VectorX<Scalar>::Zero(dh);
  for (Index i = 0; i < f.rank(); ++i) {
    sa += pa.segment(i * dh, dh);
    sv += pv.segment(i * dh, dh);
  }
  return FusionOutput<Scalar>{(sa.array() * sv.array()).matrix() + f.bias()};
}

// Materializes the full weight tensor from the factors:
// slice_k(i_1,...,i_M) = sum_i prod_m factor_m[i][i_m][k]. Reference path only.
template <typename Scalar>
WeightTensor<Scalar> cp_reconstruct(const FactorSet<Scalar>& f) {
  const Index dh = f.output_dim();
  Shape shape;
  for (int m = 0; m < f.modalities(); ++m) shape.push_back(f.modal_dim(m));

  std::vector<DenseTensor<Scalar>> slices;
  slices.reserve(dh);
  for (Index k = 0; k < dh; ++k) {
    DenseTensor<Scalar> slice = DenseTensor<Scalar>::zeros(shape);
    for (Index i = 0; i < f.rank(); ++i) {
      std::vector<ModalVector<Scalar>> columns;
      columns.reserve(f.modalities());
      for (int m = 0; m < f.modalities(); ++m)
        columns.emplace_back(f.factor(m).col(i * dh + k), m);
      slice.data() += outer_product(columns).data();
    }
    slices.push_back(std::move(slice));
  }
  return WeightTensor<Scalar>(std::move(slices), f.bias());
}

// Zero-mean normal init with per-modality std (r * (d_m+1))^(-1/2); zero bias.
template <typename Scalar>
FactorSet<Scalar> init_factors(const FusionConfig<Scalar>& cfg, std::uint64_t seed) {
  if (cfg.input_dims.size() < 2) throw DimensionMismatch("need at least two modality dims");
  if (cfg.rank < 1 || cfg.output_dim < 1) throw DimensionMismatch("rank and output dim must be >= 1");

  Rng rng = make_rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<MatrixX<Scalar>> factors;
  factors.reserve(cfg.input_dims.size());
  for (Index dm : cfg.input_dims) {
    if (dm < 1) throw DimensionMismatch("modality dims must be >= 1");
    const Index rows = dm + 1;
    const double stddev = 1.0 / std::sqrt(double(cfg.rank) * double(rows));
    MatrixX<Scalar> f(rows, cfg.rank * cfg.output_dim);
    for (Index j = 0; j < rows; ++j)
      for (Index c = 0; c < f.cols(); ++c) f(j, c) = static_cast<Scalar>(stddev * unit(rng));
    factors.push_back(std::move(f));
  }
  return FactorSet<Scalar>(std::move(factors), VectorX<Scalar>::Zero(cfg.output_dim), cfg.rank);
}

}  // namespace lmf
