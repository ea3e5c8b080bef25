#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmf/errors.hpp"
#include "lmf/explicit_path.hpp"
#include "lmf/factors.hpp"
#include "lmf/model.hpp"
#include "lmf/rng.hpp"
#include "lmf/train.hpp"

namespace lmf {

enum class FusionMethod { Explicit, LowRank };

inline std::string method_name(FusionMethod m) {
  return m == FusionMethod::Explicit ? "explicit" : "lmf";
}

// Fusion-stage parameter counts (bias included):
//   explicit: d_h * prod(d_m + 1) + d_h
//   lmf:      r * d_h * sum(d_m + 1) + d_h
template <typename Scalar>
std::int64_t count_params(const FusionConfig<Scalar>& cfg, FusionMethod method) {
  std::int64_t dh = cfg.output_dim;
  if (method == FusionMethod::Explicit) {
    std::int64_t prod = 1;
    for (Index d : cfg.input_dims) prod *= static_cast<std::int64_t>(d + 1);
    return dh * prod + dh;
  }
  std::int64_t sum = 0;
  for (Index d : cfg.input_dims) sum += static_cast<std::int64_t>(d + 1);
  return static_cast<std::int64_t>(cfg.rank) * dh * sum + dh;
}

struct TimingStats {
  double mean_ns = 0.0;
  double median_ns = 0.0;
  double std_ns = 0.0;
  int reps = 0;
  double ips() const { return mean_ns > 0.0 ? 1e9 / mean_ns : 0.0; }
};

inline TimingStats summarize_samples(std::vector<double> samples_ns) {
  TimingStats s;
  s.reps = static_cast<int>(samples_ns.size());
  if (samples_ns.empty()) return s;
  double sum = 0.0;
  for (double v : samples_ns) sum += v;
  s.mean_ns = sum / samples_ns.size();
  std::sort(samples_ns.begin(), samples_ns.end());
  const std::size_t mid = samples_ns.size() / 2;
  s.median_ns = samples_ns.size() % 2 ? samples_ns[mid] : 0.5 * (samples_ns[mid - 1] + samples_ns[mid]);
  double var = 0.0;
  for (double v : samples_ns) var += (v - s.mean_ns) * (v - s.mean_ns);
  s.std_ns = std::sqrt(var / samples_ns.size());
  return s;
}

struct BenchReport {
  std::string method;
  int modalities = 0;
  std::vector<Index> dims;
  Index rank = 0;
  Index output_dim = 0;
  std::int64_t parameter_count = 0;
  TimingStats forward;
  TimingStats forward_backward;
};

namespace detail {

template <typename T>
inline void do_not_optimize(const T& value) {
  asm volatile("" : : "g"(&value) : "memory");
}

// Runs fn once per sample until reps samples or the time budget is spent
// (whichever comes later than the 100-sample floor).
template <typename Fn>
TimingStats time_loop(Fn&& fn, int reps, int warmup, double budget_seconds = 2.0) {
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> samples;
  samples.reserve(reps);
  const auto begin = clock::now();
  while (true) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    const double elapsed = std::chrono::duration<double>(t1 - begin).count();
    if (static_cast<int>(samples.size()) >= reps) break;
    if (elapsed > budget_seconds && static_cast<int>(samples.size()) >= 100) break;
  }
  return summarize_samples(std::move(samples));
}

template <typename Scalar>
std::vector<ModalVector<Scalar>> random_appended_inputs(const std::vector<Index>& dims, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<ModalVector<Scalar>> zs;
  for (std::size_t m = 0; m < dims.size(); ++m) {
    VectorX<Scalar> v(dims[m] + 1);
    for (Index j = 0; j < dims[m]; ++j) v[j] = static_cast<Scalar>(unit(rng));
    v[dims[m]] = Scalar(1);
    zs.emplace_back(std::move(v), static_cast<int>(m));
  }
  return zs;
}

}  // namespace detail

struct BenchOptions {
  int reps = 1000;
  int warmup = 100;
  double budget_seconds = 2.0;
};

// Times one fusion inference (forward, and forward+backward) in steady
// state with deterministic inputs.
template <typename Scalar = double>
BenchReport bench_fusion(const FusionConfig<Scalar>& cfg, FusionMethod method,
                         const BenchOptions& opt = {}) {
  Rng rng = make_rng(split_seed(cfg.seed, "bench-inputs"));
  std::vector<ModalVector<Scalar>> zs = detail::random_appended_inputs<Scalar>(cfg.input_dims, rng);
  FactorSet<Scalar> factors = init_factors(cfg, split_seed(cfg.seed, "bench-factors"));
  const VectorX<Scalar> upstream = VectorX<Scalar>::Ones(cfg.output_dim);

  BenchReport report;
  report.method = method_name(method);
  report.modalities = static_cast<int>(cfg.input_dims.size());
  report.dims = cfg.input_dims;
  report.rank = cfg.rank;
  report.output_dim = cfg.output_dim;
  report.parameter_count = count_params(cfg, method);

  if (method == FusionMethod::LowRank) {
    report.forward = detail::time_loop(
        [&] { detail::do_not_optimize(lmf_fuse(factors, zs, /*strict_append_one=*/false)); },
        opt.reps, opt.warmup, opt.budget_seconds);
    report.forward_backward = detail::time_loop(
        [&] {
          detail::do_not_optimize(lmf_fuse(factors, zs, false));
          detail::do_not_optimize(fuse_backward(factors, zs, upstream));
        },
        opt.reps, opt.warmup, opt.budget_seconds);
  } else {
    // Materialize the input tensor and contract the full weight tensor.
    WeightTensor<Scalar> w = cp_reconstruct(factors);
    report.forward = detail::time_loop(
        [&] { detail::do_not_optimize(tensor_linear(w, outer_product(zs))); },
        opt.reps, opt.warmup, opt.budget_seconds);
    report.forward_backward = detail::time_loop(
        [&] {
          DenseTensor<Scalar> z = outer_product(zs);
          detail::do_not_optimize(tensor_linear(w, z));
          detail::do_not_optimize(explicit_backward(w, zs, z, upstream));
        },
        opt.reps, opt.warmup, opt.budget_seconds);
  }
  return report;
}

struct SweepCell {
  Index rank = 0;
  std::uint64_t seed = 0;
  double final_train_mse = std::numeric_limits<double>::quiet_NaN();
  double final_val_mse = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

struct SweepResult {
  Index rank = 0;
  std::vector<SweepCell> cells;
  double mean_final_train_mse = 0.0;
  double std_final_train_mse = 0.0;
};

// Trains at every (rank, seed) pair; a diverging cell is recorded, not fatal.
template <typename Scalar = double>
std::vector<SweepResult> rank_sweep(const SyntheticTask& task, const FusionConfig<Scalar>& base_cfg,
                                    const TrainOptions& base_opt, const std::vector<Index>& ranks,
                                    const std::vector<std::uint64_t>& seeds) {
  if (ranks.empty()) throw DimensionMismatch("rank sweep needs at least one rank");
  std::vector<SweepResult> results;
  for (Index r : ranks) {
    SweepResult row;
    row.rank = r;
    std::vector<double> finals;
    for (std::uint64_t seed : seeds) {
      SweepCell cell;
      cell.rank = r;
      cell.seed = seed;
      FusionConfig<Scalar> cfg = base_cfg;
      cfg.rank = r;
      TrainOptions opt = base_opt;
      opt.seed = seed;
      try {
        TrainResult<Scalar> res = train(task, cfg, opt);
        cell.final_train_mse = res.final_train_mse();
        cell.final_val_mse = res.final_val_mse();
        finals.push_back(cell.final_train_mse);
      } catch (const NonFiniteLoss& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      row.cells.push_back(std::move(cell));
    }
    if (!finals.empty()) {
      double sum = 0.0;
      for (double v : finals) sum += v;
      row.mean_final_train_mse = sum / finals.size();
      double var = 0.0;
      for (double v : finals) var += (v - row.mean_final_train_mse) * (v - row.mean_final_train_mse);
      row.std_final_train_mse = std::sqrt(var / finals.size());
    }
    results.push_back(std::move(row));
  }
  return results;
}

// --- report serialization ---------------------------------------------

inline std::string bench_csv_header() {
  return "method,M,dims,r,d_h,params,fwd_ips,fwdbwd_ips,mean_ns,median_ns,std_ns,reps";
}

inline std::string dims_string(const std::vector<Index>& dims) {
  std::ostringstream out;
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? "x" : "") << dims[i];
  return out.str();
}

// mean/median/std columns describe the forward+backward pass.
inline std::string bench_csv_row(const BenchReport& r) {
  std::ostringstream out;
  out << r.method << ',' << r.modalities << ',' << dims_string(r.dims) << ',' << r.rank << ','
      << r.output_dim << ',' << r.parameter_count << ',' << r.forward.ips() << ','
      << r.forward_backward.ips() << ',' << r.forward_backward.mean_ns << ','
      << r.forward_backward.median_ns << ',' << r.forward_backward.std_ns << ','
      << r.forward_backward.reps;
  return out.str();
}

inline nlohmann::json bench_json(const BenchReport& r) {
  return {{"method", r.method},
          {"M", r.modalities},
          {"dims", dims_string(r.dims)},
          {"r", r.rank},
          {"d_h", r.output_dim},
          {"params", r.parameter_count},
          {"fwd_ips", r.forward.ips()},
          {"fwdbwd_ips", r.forward_backward.ips()},
          {"mean_ns", r.forward_backward.mean_ns},
          {"median_ns", r.forward_backward.median_ns},
          {"std_ns", r.forward_backward.std_ns},
          {"reps", r.forward_backward.reps}};
}

inline std::string sweep_csv_header() { return "rank,seed,final_train_mse,final_val_mse"; }

inline std::string sweep_csv_rows(const std::vector<SweepResult>& results) {
  std::ostringstream out;
  for (const auto& row : results)
    for (const auto& cell : row.cells)
      out << cell.rank << ',' << cell.seed << ',' << cell.final_train_mse << ','
          << cell.final_val_mse << '\n';
  return out.str();
}

inline nlohmann::json sweep_json(const std::vector<SweepResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : results) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : row.cells)
      cells.push_back({{"rank", cell.rank},
                       {"seed", cell.seed},
                       {"final_train_mse", cell.final_train_mse},
                       {"final_val_mse", cell.final_val_mse},
                       {"failed", cell.failed}});
    rows.push_back({{"rank", row.rank},
                    {"mean_final_train_mse", row.mean_final_train_mse},
                    {"std_final_train_mse", row.std_final_train_mse},
                    {"cells", cells}});
  }
  return rows;
}

}  // namespace lmf
