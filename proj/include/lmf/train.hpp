#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lmf/errors.hpp"
#include "lmf/model.hpp"
#include "lmf/rng.hpp"

namespace lmf {

// Regression task whose targets come from a hidden low-rank fusion model of
// known rank, plus i.i.d. Gaussian noise.
struct SyntheticTask {
  std::uint64_t seed = 0;
  std::vector<Index> input_dims;  // raw per-modality dims (pre-append)
  Index ground_truth_rank = 1;
  Index output_dim = 1;
  double noise_std = 0.0;
  int sample_count = 0;
};

template <typename Scalar>
struct Dataset {
  std::vector<std::vector<VectorX<Scalar>>> inputs;  // [sample][modality]
  std::vector<VectorX<Scalar>> targets;
  int size() const { return static_cast<int>(inputs.size()); }
};

template <typename Scalar = double>
Dataset<Scalar> generate_task_data(const SyntheticTask& task) {
  FusionConfig<Scalar> gt_cfg{task.input_dims, task.ground_truth_rank, task.output_dim,
                              split_seed(task.seed, "ground-truth")};
  FactorSet<Scalar> gt = init_factors(gt_cfg, gt_cfg.seed);

  Rng rng = make_rng(split_seed(task.seed, "task-data"));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset<Scalar> data;
  data.inputs.reserve(task.sample_count);
  data.targets.reserve(task.sample_count);
  for (int s = 0; s < task.sample_count; ++s) {
    std::vector<VectorX<Scalar>> xs;
    std::vector<ModalVector<Scalar>> zs;
    for (std::size_t m = 0; m < task.input_dims.size(); ++m) {
      VectorX<Scalar> x(task.input_dims[m]);
      for (Index j = 0; j < x.size(); ++j) x[j] = static_cast<Scalar>(unit(rng));
      zs.push_back(append_one(ModalVector<Scalar>(x, static_cast<int>(m))));
      xs.push_back(std::move(x));
    }
    VectorX<Scalar> y = lmf_fuse(gt, zs).values;
    if (task.noise_std > 0.0)
      for (Index k = 0; k < y.size(); ++k) y[k] += static_cast<Scalar>(task.noise_std * noise(rng));
    data.inputs.push_back(std::move(xs));
    data.targets.push_back(std::move(y));
  }
  return data;
}

struct TrainOptions {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double validation_fraction = 0.2;
  bool use_encoders = false;
  Index encoder_hidden_multiple = 2;  // hidden width = multiple * output dim
  std::uint64_t seed = 0;
};

struct EpochLoss {
  int epoch = 0;  // 0 is the pre-training evaluation
  double train_mse = 0.0;
  double val_mse = 0.0;
};

template <typename Scalar>
struct TrainResult {
  ModelParams<Scalar> model;
  std::vector<EpochLoss> curve;
  double initial_train_mse() const { return curve.front().train_mse; }
  double final_train_mse() const { return curve.back().train_mse; }
  double final_val_mse() const { return curve.back().val_mse; }
};

template <typename Scalar>
double mse_over(const ModelParams<Scalar>& model, const Dataset<Scalar>& data,
                const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  double acc = 0.0;
  for (int s : idx) {
    VectorX<Scalar> err = model_forward(model, data.inputs[s]) - data.targets[s];
    acc += static_cast<double>(err.squaredNorm()) / static_cast<double>(err.size());
  }
  return acc / static_cast<double>(idx.size());
}

namespace detail {

template <typename Scalar>
ModelParams<Scalar> init_model(const SyntheticTask& task, const FusionConfig<Scalar>& cfg,
                               const TrainOptions& opt) {
  ModelParams<Scalar> model{init_factors(cfg, split_seed(opt.seed, "model-factors")), {}, {}};
  if (opt.use_encoders) {
    Rng rng = make_rng(split_seed(opt.seed, "model-encoders"));
    std::normal_distribution<double> unit(0.0, 1.0);
    auto he_matrix = [&](Index rows, Index cols) {
      MatrixX<Scalar> w(rows, cols);
      const double stddev = std::sqrt(2.0 / static_cast<double>(cols));
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) w(i, j) = static_cast<Scalar>(stddev * unit(rng));
      return w;
    };
    for (std::size_t m = 0; m < task.input_dims.size(); ++m) {
      const Index in = task.input_dims[m];
      const Index out = cfg.input_dims[m];
      const Index hidden = opt.encoder_hidden_multiple * out;
      model.encoders.push_back(EncoderParams<Scalar>{he_matrix(hidden, in), VectorX<Scalar>::Zero(hidden),
                                                     he_matrix(out, hidden), VectorX<Scalar>::Zero(out)});
    }
  }
  return model;
}

// Momentum buffers shaped like the trainable parameters.
template <typename Scalar>
struct Velocity {
  std::vector<MatrixX<Scalar>> factors;
  VectorX<Scalar> bias;
  std::vector<EncoderParams<Scalar>> encoders;

  explicit Velocity(const ModelParams<Scalar>& model) {
    for (int m = 0; m < model.fusion.modalities(); ++m)
      factors.push_back(MatrixX<Scalar>::Zero(model.fusion.factor(m).rows(), model.fusion.factor(m).cols()));
    bias = VectorX<Scalar>::Zero(model.fusion.output_dim());
    for (const auto& e : model.encoders)
      encoders.push_back(EncoderParams<Scalar>{MatrixX<Scalar>::Zero(e.w1.rows(), e.w1.cols()),
                                               VectorX<Scalar>::Zero(e.b1.size()),
                                               MatrixX<Scalar>::Zero(e.w2.rows(), e.w2.cols()),
                                               VectorX<Scalar>::Zero(e.b2.size())});
  }
};

}  // namespace detail

// Mini-batch SGD with momentum on mean squared error. Deterministic for a
// fixed option seed; throws NonFiniteLoss with learning-rate guidance when
// the loss diverges.
template <typename Scalar = double>
TrainResult<Scalar> train(const SyntheticTask& task, const FusionConfig<Scalar>& cfg,
                          const TrainOptions& opt) {
  Dataset<Scalar> data = generate_task_data<Scalar>(task);
  if (data.size() < 2) throw DimensionMismatch("training needs at least two samples");

  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const int val_count = std::min<int>(data.size() - 1,
                                      static_cast<int>(opt.validation_fraction * data.size()));
  std::vector<int> val_idx(order.end() - val_count, order.end());
  std::vector<int> train_idx(order.begin(), order.end() - val_count);
  // Loss evaluation iterates in stable order so the curve is independent of
  // the epoch shuffles.
  const std::vector<int> eval_idx = train_idx;

  TrainResult<Scalar> result{detail::init_model(task, cfg, opt), {}};
  ModelParams<Scalar>& model = result.model;
  detail::Velocity<Scalar> vel(model);
  Rng shuffle_rng = make_rng(split_seed(opt.seed, "shuffle"));

  result.curve.push_back({0, mse_over(model, data, eval_idx), mse_over(model, data, val_idx)});

  const double lr = opt.learning_rate;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    for (std::size_t start = 0; start < train_idx.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(train_idx.size(), start + opt.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);

      // Accumulate the batch-mean gradient into the velocity update.
      detail::Velocity<Scalar> batch_grad(model);
      for (std::size_t b = start; b < stop; ++b) {
        const int s = train_idx[b];
        ModelActivations<Scalar> act = model_forward_cached(model, data.inputs[s]);
        VectorX<Scalar> err = act.prediction - data.targets[s];
        VectorX<Scalar> d_pred = err * static_cast<Scalar>(2.0 * inv_batch / err.size());
        GradientRecord<Scalar> g = model_backward(model, act, d_pred);
        for (int m = 0; m < model.fusion.modalities(); ++m) batch_grad.factors[m] += g.d_factors[m];
        batch_grad.bias += g.d_bias;
        for (std::size_t m = 0; m < model.encoders.size(); ++m) {
          batch_grad.encoders[m].w1 += g.d_encoders[m].w1;
          batch_grad.encoders[m].b1 += g.d_encoders[m].b1;
          batch_grad.encoders[m].w2 += g.d_encoders[m].w2;
          batch_grad.encoders[m].b2 += g.d_encoders[m].b2;
        }
      }

      const Scalar mu = static_cast<Scalar>(opt.momentum);
      const Scalar step = static_cast<Scalar>(lr);
      for (int m = 0; m < model.fusion.modalities(); ++m) {
        vel.factors[m] = mu * vel.factors[m] - step * batch_grad.factors[m];
        model.fusion.factor(m) += vel.factors[m];
      }
      vel.bias = mu * vel.bias - step * batch_grad.bias;
      model.fusion.bias() += vel.bias;
      for (std::size_t m = 0; m < model.encoders.size(); ++m) {
        auto& v = vel.encoders[m];
        auto& p = model.encoders[m];
        const auto& g = batch_grad.encoders[m];
        v.w1 = mu * v.w1 - step * g.w1;
        v.b1 = mu * v.b1 - step * g.b1;
        v.w2 = mu * v.w2 - step * g.w2;
        v.b2 = mu * v.b2 - step * g.b2;
        p.w1 += v.w1;
        p.b1 += v.b1;
        p.w2 += v.w2;
        p.b2 += v.b2;
      }
    }

    const double train_mse = mse_over(model, data, eval_idx);
    const double val_mse = mse_over(model, data, val_idx);
    if (!std::isfinite(train_mse) || !std::isfinite(val_mse))
      throw NonFiniteLoss("loss became non-finite at epoch " + std::to_string(epoch) +
                          "; try a smaller learning rate (current " + std::to_string(lr) + ")");
    result.curve.push_back({epoch, train_mse, val_mse});
  }
  return result;
}

}  // namespace lmf
