#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "lmf/errors.hpp"
#include "lmf/factors.hpp"
#include "lmf/tensor.hpp"

namespace lmf {

// Two affine layers with ReLU: z = relu(W2 * relu(W1*x + b1) + b2).
template <typename Scalar>
struct EncoderParams {
  MatrixX<Scalar> w1;
  VectorX<Scalar> b1;
  MatrixX<Scalar> w2;
  VectorX<Scalar> b2;

  Index input_dim() const { return w1.cols(); }
  Index output_dim() const { return w2.rows(); }

  void validate() const {
    if (w1.rows() != b1.size() || w2.rows() != b2.size() || w2.cols() != w1.rows())
      throw ShapeMismatch("encoder layer shapes do not chain");
  }
};

template <typename Scalar>
struct AffineHead {
  MatrixX<Scalar> w;
  VectorX<Scalar> b;
};

template <typename Scalar>
VectorX<Scalar> relu(const VectorX<Scalar>& v) {
  return v.cwiseMax(Scalar(0));
}

template <typename Scalar>
struct EncoderActivations {
  VectorX<Scalar> x;
  VectorX<Scalar> a1;  // pre-activation of layer 1
  VectorX<Scalar> h1;  // relu(a1)
  VectorX<Scalar> a2;  // pre-activation of layer 2
  VectorX<Scalar> z;   // relu(a2)
};

template <typename Scalar>
EncoderActivations<Scalar> encoder_forward_cached(const EncoderParams<Scalar>& p, const VectorX<Scalar>& x) {
  p.validate();
  if (x.size() != p.input_dim()) throw ShapeMismatch("encoder input length does not match");
  EncoderActivations<Scalar> act;
  act.x = x;
  act.a1 = p.w1 * x + p.b1;
  act.h1 = relu(act.a1);
  act.a2 = p.w2 * act.h1 + p.b2;
  act.z = relu(act.a2);
  return act;
}

template <typename Scalar>
ModalVector<Scalar> encoder_forward(const EncoderParams<Scalar>& p, const VectorX<Scalar>& x,
                                    int modality_index = 0) {
  return ModalVector<Scalar>(encoder_forward_cached(p, x).z, modality_index);
}

// Gradients with the same shapes as their parameters, plus d(loss)/dz_m.
template <typename Scalar>
struct GradientRecord {
  std::vector<MatrixX<Scalar>> d_factors;
  VectorX<Scalar> d_bias;
  std::vector<VectorX<Scalar>> d_inputs;  // w.r.t. the appended z_m; last entry always 0
  std::vector<EncoderParams<Scalar>> d_encoders;
  std::optional<AffineHead<Scalar>> d_head;
};

// Analytic gradients of lmf_fuse given upstream = d(loss)/dh.
// With P_m(i,k) the projection of z_m, h_k = sum_i prod_m P_m(i,k) + b_k:
//   d/dP_m = upstream_k * prod_{n != m} P_n(i,k), expanded through the GEMV.
template <typename Scalar>
GradientRecord<Scalar> fuse_backward(const FactorSet<Scalar>& f,
                                     const std::vector<ModalVector<Scalar>>& inputs,
                                     const VectorX<Scalar>& upstream) {
  if (upstream.size() != f.output_dim()) throw ShapeMismatch("upstream length must equal output dim");
  const int M = f.modalities();
  const Index cols = f.rank() * f.output_dim();
  const Index dh = f.output_dim();

  std::vector<VectorX<Scalar>> proj(M);
  for (int m = 0; m < M; ++m) {
    if (inputs[m].values.size() != f.modal_dim(m))
      throw ShapeMismatch("input " + std::to_string(m) + " length does not match its factor");
    proj[m] = f.factor(m).transpose() * inputs[m].values;
  }

  // Leave-one-out products via prefix/suffix scans, robust to zero entries.
  std::vector<VectorX<Scalar>> prefix(M + 1), suffix(M + 1);
  prefix[0] = VectorX<Scalar>::Ones(cols);
  for (int m = 0; m < M; ++m) prefix[m + 1] = prefix[m].cwiseProduct(proj[m]);
  suffix[M] = VectorX<Scalar>::Ones(cols);
  for (int m = M; m-- > 0;) suffix[m] = suffix[m + 1].cwiseProduct(proj[m]);

  // upstream broadcast over the rank axis of the stacked (r*dh) layout.
  VectorX<Scalar> up_tiled(cols);
  for (Index i = 0; i < f.rank(); ++i) up_tiled.segment(i * dh, dh) = upstream;

  GradientRecord<Scalar> grad;
  grad.d_bias = upstream;
  grad.d_factors.resize(M);
  grad.d_inputs.resize(M);
  for (int m = 0; m < M; ++m) {
    VectorX<Scalar> d_proj = up_tiled.cwiseProduct(prefix[m]).cwiseProduct(suffix[m + 1]);
    grad.d_factors[m] = inputs[m].values * d_proj.transpose();
    grad.d_inputs[m] = f.factor(m) * d_proj;
  }
  return grad;
}

// Full model: encoders (optional) -> append_one -> lmf_fuse -> optional head.
template <typename Scalar>
struct ModelParams {
  FactorSet<Scalar> fusion;
  std::vector<EncoderParams<Scalar>> encoders;  // empty: raw inputs used as z_m
  std::optional<AffineHead<Scalar>> head;       // absent: identity head
};

template <typename Scalar>
struct ModelActivations {
  std::vector<EncoderActivations<Scalar>> enc;
  std::vector<ModalVector<Scalar>> fused_inputs;  // with 1 appended
  VectorX<Scalar> h;
  VectorX<Scalar> prediction;
};

template <typename Scalar>
ModelActivations<Scalar> model_forward_cached(const ModelParams<Scalar>& params,
                                              const std::vector<VectorX<Scalar>>& raw_inputs) {
  const int M = params.fusion.modalities();
  if (static_cast<int>(raw_inputs.size()) != M) throw ShapeMismatch("raw input count does not match");
  if (!params.encoders.empty() && static_cast<int>(params.encoders.size()) != M)
    throw ShapeMismatch("encoder count does not match modality count");

  ModelActivations<Scalar> act;
  act.fused_inputs.reserve(M);
  for (int m = 0; m < M; ++m) {
    VectorX<Scalar> z;
    if (params.encoders.empty()) {
      z = raw_inputs[m];
    } else {
      act.enc.push_back(encoder_forward_cached(params.encoders[m], raw_inputs[m]));
      z = act.enc.back().z;
    }
    act.fused_inputs.push_back(append_one(ModalVector<Scalar>(std::move(z), m)));
  }
  act.h = lmf_fuse(params.fusion, act.fused_inputs).values;
  act.prediction = params.head ? VectorX<Scalar>(params.head->w * act.h + params.head->b) : act.h;
  return act;
}

template <typename Scalar>
VectorX<Scalar> model_forward(const ModelParams<Scalar>& params,
                              const std::vector<VectorX<Scalar>>& raw_inputs) {
  return model_forward_cached(params, raw_inputs).prediction;
}

// Backward through the whole model given d(loss)/d(prediction).
template <typename Scalar>
GradientRecord<Scalar> model_backward(const ModelParams<Scalar>& params,
                                      const ModelActivations<Scalar>& act,
                                      const VectorX<Scalar>& d_prediction) {
  VectorX<Scalar> d_h;
  std::optional<AffineHead<Scalar>> d_head;
  if (params.head) {
    d_head = AffineHead<Scalar>{d_prediction * act.h.transpose(), d_prediction};
    d_h = params.head->w.transpose() * d_prediction;
  } else {
    d_h = d_prediction;
  }

  GradientRecord<Scalar> grad = fuse_backward(params.fusion, act.fused_inputs, d_h);
  grad.d_head = std::move(d_head);

  if (!params.encoders.empty()) {
    grad.d_encoders.resize(params.encoders.size());
    for (std::size_t m = 0; m < params.encoders.size(); ++m) {
      const auto& p = params.encoders[m];
      const auto& e = act.enc[m];
      // The appended-1 coordinate is a constant; it carries no gradient.
      VectorX<Scalar> d_z = grad.d_inputs[m].head(e.z.size());
      VectorX<Scalar> d_a2 = (e.a2.array() > Scalar(0)).select(d_z, VectorX<Scalar>::Zero(d_z.size()));
      VectorX<Scalar> d_h1 = p.w2.transpose() * d_a2;
      VectorX<Scalar> d_a1 = (e.a1.array() > Scalar(0)).select(d_h1, VectorX<Scalar>::Zero(d_h1.size()));
      grad.d_encoders[m] = EncoderParams<Scalar>{d_a1 * e.x.transpose(), d_a1,
                                                 d_a2 * e.h1.transpose(), d_a2};
    }
  }
  return grad;
}

}  // namespace lmf
