#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmf/factors.hpp"
#include "lmf/model.hpp"
#include "lmf/rng.hpp"
#include "lmf/tensor.hpp"

namespace lmf {

// One randomized check of the factorized-vs-explicit identity:
// lmf_fuse(f, zs) against tensor_linear(cp_reconstruct(f), outer_product(zs)).
struct EquivalenceCase {
  int modalities = 2;
  std::vector<Index> dims;  // pre-append
  Index rank = 1;
  Index output_dim = 1;
  std::uint64_t seed = 0;
};

struct EquivalenceBounds {
  int max_modalities = 4;
  Index max_dim = 8;
  Index max_rank = 4;
  Index max_output_dim = 4;
};

inline EquivalenceCase random_equivalence_case(Rng& rng, const EquivalenceBounds& b = {}) {
  std::uniform_int_distribution<int> modal(2, b.max_modalities);
  std::uniform_int_distribution<Index> dim(1, b.max_dim);
  std::uniform_int_distribution<Index> rank(1, b.max_rank);
  std::uniform_int_distribution<Index> dh(1, b.max_output_dim);
  EquivalenceCase c;
  c.modalities = modal(rng);
  for (int m = 0; m < c.modalities; ++m) c.dims.push_back(dim(rng));
  c.rank = rank(rng);
  c.output_dim = dh(rng);
  c.seed = rng();
  return c;
}

template <typename Scalar = double>
std::vector<ModalVector<Scalar>> random_case_inputs(const EquivalenceCase& c) {
  Rng rng = make_rng(split_seed(c.seed, "case-inputs"));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<ModalVector<Scalar>> zs;
  for (int m = 0; m < c.modalities; ++m) {
    VectorX<Scalar> x(c.dims[m]);
    for (Index j = 0; j < x.size(); ++j) x[j] = static_cast<Scalar>(unit(rng));
    zs.push_back(append_one(ModalVector<Scalar>(std::move(x), m)));
  }
  return zs;
}

template <typename Scalar = double>
FactorSet<Scalar> random_case_factors(const EquivalenceCase& c) {
  // Bounded uniform factors keep the explicit-path sums well conditioned.
  Rng rng = make_rng(split_seed(c.seed, "case-factors"));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<MatrixX<Scalar>> factors;
  for (int m = 0; m < c.modalities; ++m) {
    MatrixX<Scalar> f(c.dims[m] + 1, c.rank * c.output_dim);
    for (Index j = 0; j < f.rows(); ++j)
      for (Index k = 0; k < f.cols(); ++k) f(j, k) = static_cast<Scalar>(unit(rng));
    factors.push_back(std::move(f));
  }
  VectorX<Scalar> bias(c.output_dim);
  for (Index k = 0; k < bias.size(); ++k) bias[k] = static_cast<Scalar>(unit(rng));
  return FactorSet<Scalar>(std::move(factors), std::move(bias), c.rank);
}

struct EquivalenceOutcome {
  double max_abs_error = 0.0;
};

template <typename Scalar = double>
EquivalenceOutcome run_equivalence_case(const EquivalenceCase& c) {
  FactorSet<Scalar> f = random_case_factors<Scalar>(c);
  std::vector<ModalVector<Scalar>> zs = random_case_inputs<Scalar>(c);
  VectorX<Scalar> fast = lmf_fuse(f, zs).values;
  VectorX<Scalar> slow = tensor_linear(cp_reconstruct(f), outer_product(zs));
  return {static_cast<double>((fast - slow).template lpNorm<Eigen::Infinity>())};
}

inline nlohmann::json equivalence_case_json(const EquivalenceCase& c) {
  return {{"M", c.modalities}, {"dims", c.dims}, {"r", c.rank}, {"d_h", c.output_dim}, {"seed", c.seed}};
}

// --- finite-difference gradient checking --------------------------------

// A flat view over every trainable array of a model, for perturbation.
template <typename Scalar>
struct ParamView {
  std::string name;
  Index size = 0;
  std::function<Scalar&(ModelParams<Scalar>&, Index)> at;
};

template <typename Scalar>
std::vector<ParamView<Scalar>> parameter_views(const ModelParams<Scalar>& model) {
  std::vector<ParamView<Scalar>> views;
  for (int m = 0; m < model.fusion.modalities(); ++m) {
    const Index n = model.fusion.factor(m).size();
    views.push_back({"factor" + std::to_string(m), n,
                     [m](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.fusion.factor(m).data()[i]; }});
  }
  views.push_back({"fusion_bias", model.fusion.output_dim(),
                   [](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.fusion.bias()[i]; }});
  for (std::size_t m = 0; m < model.encoders.size(); ++m) {
    const auto& e = model.encoders[m];
    const std::string tag = "enc" + std::to_string(m) + "_";
    views.push_back({tag + "w1", e.w1.size(),
                     [m](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.encoders[m].w1.data()[i]; }});
    views.push_back({tag + "b1", e.b1.size(),
                     [m](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.encoders[m].b1[i]; }});
    views.push_back({tag + "w2", e.w2.size(),
                     [m](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.encoders[m].w2.data()[i]; }});
    views.push_back({tag + "b2", e.b2.size(),
                     [m](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.encoders[m].b2[i]; }});
  }
  if (model.head) {
    views.push_back({"head_w", model.head->w.size(),
                     [](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.head->w.data()[i]; }});
    views.push_back({"head_b", model.head->b.size(),
                     [](ModelParams<Scalar>& p, Index i) -> Scalar& { return p.head->b[i]; }});
  }
  return views;
}

// Analytic gradients of a whole model (plus d/dz_m, via intact modal inputs)
// checked against central finite differences of the MSE loss.
struct GradCheckOutcome {
  double max_rel_error = 0.0;
  std::string worst_param;
};

template <typename Scalar = double>
GradCheckOutcome gradient_check(const ModelParams<Scalar>& model,
                                const std::vector<VectorX<Scalar>>& raw_inputs,
                                const VectorX<Scalar>& target, double step = 1e-5) {
  auto loss_of = [&](const ModelParams<Scalar>& p) {
    VectorX<Scalar> err = model_forward(p, raw_inputs) - target;
    return static_cast<double>(err.squaredNorm()) / static_cast<double>(err.size());
  };

  ModelActivations<Scalar> act = model_forward_cached(model, raw_inputs);
  VectorX<Scalar> err = act.prediction - target;
  VectorX<Scalar> d_pred = err * static_cast<Scalar>(2.0 / err.size());
  GradientRecord<Scalar> grad = model_backward(model, act, d_pred);

  auto analytic_of = [&](const std::string& name, Index i) -> double {
    for (int m = 0; m < model.fusion.modalities(); ++m)
      if (name == "factor" + std::to_string(m)) return grad.d_factors[m].data()[i];
    if (name == "fusion_bias") return grad.d_bias[i];
    for (std::size_t m = 0; m < model.encoders.size(); ++m) {
      const std::string tag = "enc" + std::to_string(m) + "_";
      if (name == tag + "w1") return grad.d_encoders[m].w1.data()[i];
      if (name == tag + "b1") return grad.d_encoders[m].b1[i];
      if (name == tag + "w2") return grad.d_encoders[m].w2.data()[i];
      if (name == tag + "b2") return grad.d_encoders[m].b2[i];
    }
    if (name == "head_w") return grad.d_head->w.data()[i];
    if (name == "head_b") return grad.d_head->b[i];
    throw std::logic_error("unknown parameter view " + name);
  };

  GradCheckOutcome outcome;
  ModelParams<Scalar> work = model;
  for (const auto& view : parameter_views(model)) {
    for (Index i = 0; i < view.size; ++i) {
      Scalar& slot = view.at(work, i);
      const Scalar saved = slot;
      slot = saved + static_cast<Scalar>(step);
      const double up = loss_of(work);
      slot = saved - static_cast<Scalar>(step);
      const double down = loss_of(work);
      slot = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic_of(view.name, i);
      // Denominator floor keeps finite-difference roundoff noise from
      // dominating near-zero gradients.
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
      if (rel > outcome.max_rel_error) {
        outcome.max_rel_error = rel;
        outcome.worst_param = view.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return outcome;
}

// Smallest |preactivation| across encoders. Finite differences are only
// trustworthy when no ReLU argument sits within the step of its kink.
template <typename Scalar>
double relu_kink_margin(const ModelParams<Scalar>& model, const std::vector<VectorX<Scalar>>& raw_inputs) {
  if (model.encoders.empty()) return 1.0;
  double margin = std::numeric_limits<double>::infinity();
  ModelActivations<Scalar> act = model_forward_cached(model, raw_inputs);
  for (const auto& e : act.enc) {
    margin = std::min(margin, static_cast<double>(e.a1.cwiseAbs().minCoeff()));
    margin = std::min(margin, static_cast<double>(e.a2.cwiseAbs().minCoeff()));
  }
  return margin;
}

// Random small model + inputs for gradient checks.
template <typename Scalar = double>
ModelParams<Scalar> random_check_model(const std::vector<Index>& raw_dims, const std::vector<Index>& enc_dims,
                                       Index rank, Index output_dim, Index target_dim, std::uint64_t seed) {
  Rng rng = make_rng(split_seed(seed, "check-model"));
  std::uniform_real_distribution<double> unit(-0.8, 0.8);
  auto rand_matrix = [&](Index rows, Index cols) {
    MatrixX<Scalar> w(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) w(i, j) = static_cast<Scalar>(unit(rng));
    return w;
  };
  auto rand_vector = [&](Index n) {
    VectorX<Scalar> v(n);
    for (Index i = 0; i < n; ++i) v[i] = static_cast<Scalar>(unit(rng));
    return v;
  };

  std::vector<MatrixX<Scalar>> factors;
  for (Index d : enc_dims) factors.push_back(rand_matrix(d + 1, rank * output_dim));
  ModelParams<Scalar> model{FactorSet<Scalar>(std::move(factors), rand_vector(output_dim), rank), {}, {}};
  for (std::size_t m = 0; m < raw_dims.size(); ++m) {
    const Index hidden = 2 * enc_dims[m];
    model.encoders.push_back(EncoderParams<Scalar>{rand_matrix(hidden, raw_dims[m]), rand_vector(hidden),
                                                   rand_matrix(enc_dims[m], hidden), rand_vector(enc_dims[m])});
  }
  if (target_dim != output_dim)
    model.head = AffineHead<Scalar>{rand_matrix(target_dim, output_dim), rand_vector(target_dim)};
  return model;
}

}  // namespace lmf
