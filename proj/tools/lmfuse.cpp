// lmfuse: verify, train, benchmark and rank-sweep the low-rank fusion layer.
//
// Exit codes: 0 success, 1 verification/training failure, 2 config error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lmf/bench.hpp"
#include "lmf/io.hpp"
#include "lmf/train.hpp"
#include "lmf/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  std::vector<lmf::Index> dims{8, 8, 8};  // pre-append d_m
  lmf::Index rank = 4;
  lmf::Index output_dim = 1;
  std::uint64_t seed = 42;
  std::string precision = "f64";
  std::string out_dir = "out";

  // verify
  int cases = 1000;
  int grad_cases = 50;
  bool inject_corruption = false;  // test hook for the failure path

  // train / sweep
  int epochs = 300;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batch_size = 32;
  double noise_std = 0.0;
  int samples = 400;
  lmf::Index ground_truth_rank = 4;
  bool use_encoders = false;
  std::vector<lmf::Index> ranks{1, 2, 4, 8, 16};
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3, 4, 5};

  // bench
  int reps = 1000;
  int warmup = 100;
};

json config_json(const RunConfig& c) {
  return {{"dims", c.dims},
          {"rank", c.rank},
          {"output_dim", c.output_dim},
          {"seed", c.seed},
          {"precision", c.precision},
          {"out_dir", c.out_dir},
          {"cases", c.cases},
          {"grad_cases", c.grad_cases},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"batch_size", c.batch_size},
          {"noise_std", c.noise_std},
          {"samples", c.samples},
          {"ground_truth_rank", c.ground_truth_rank},
          {"use_encoders", c.use_encoders},
          {"ranks", c.ranks},
          {"sweep_seeds", c.sweep_seeds},
          {"reps", c.reps},
          {"warmup", c.warmup}};
}

template <typename T>
void maybe_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_config_file(const std::string& path, RunConfig& c) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open config file " + path);
  json j = json::parse(in);
  maybe_get(j, "dims", c.dims);
  maybe_get(j, "rank", c.rank);
  maybe_get(j, "output_dim", c.output_dim);
  maybe_get(j, "seed", c.seed);
  maybe_get(j, "precision", c.precision);
  maybe_get(j, "out_dir", c.out_dir);
  maybe_get(j, "cases", c.cases);
  maybe_get(j, "grad_cases", c.grad_cases);
  maybe_get(j, "epochs", c.epochs);
  maybe_get(j, "learning_rate", c.learning_rate);
  maybe_get(j, "momentum", c.momentum);
  maybe_get(j, "batch_size", c.batch_size);
  maybe_get(j, "noise_std", c.noise_std);
  maybe_get(j, "samples", c.samples);
  maybe_get(j, "ground_truth_rank", c.ground_truth_rank);
  maybe_get(j, "use_encoders", c.use_encoders);
  maybe_get(j, "ranks", c.ranks);
  maybe_get(j, "sweep_seeds", c.sweep_seeds);
  maybe_get(j, "reps", c.reps);
  maybe_get(j, "warmup", c.warmup);
}

void validate(const RunConfig& c) {
  if (c.dims.empty()) throw CLI::ValidationError("dims", "at least one modality dim required");
  for (lmf::Index d : c.dims)
    if (d < 1) throw CLI::ValidationError("dims", "every modality dim must be >= 1");
  if (c.rank < 1) throw CLI::ValidationError("rank", "rank must be >= 1");
  if (c.output_dim < 1) throw CLI::ValidationError("dh", "output dim must be >= 1");
  if (c.precision != "f32" && c.precision != "f64")
    throw CLI::ValidationError("precision", "precision must be f32 or f64");
  for (lmf::Index r : c.ranks)
    if (r < 1) throw CLI::ValidationError("ranks", "every rank must be >= 1");
}

// Every run drops the fully-resolved config next to its outputs.
fs::path prepare_out_dir(const RunConfig& c) {
  fs::path out(c.out_dir);
  fs::create_directories(out);
  std::ofstream f(out / "config.json");
  f << config_json(c).dump(2) << '\n';
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

int cmd_verify(const RunConfig& cfg) {
  fs::path out = prepare_out_dir(cfg);
  lmf::Rng rng = lmf::make_rng(lmf::split_seed(cfg.seed, "verify-cases"));

  double worst = 0.0;
  for (int n = 0; n < cfg.cases; ++n) {
    lmf::EquivalenceCase c = lmf::random_equivalence_case(rng);
    double err = lmf::run_equivalence_case(c).max_abs_error;
    if (cfg.inject_corruption && n == cfg.cases / 2) err = 1.0;  // forced failure for testing
    worst = std::max(worst, err);
    if (err >= 1e-9) {
      json dump = lmf::equivalence_case_json(c);
      dump["max_abs_error"] = err;
      write_text(out / "counterexample.json", dump.dump(2) + "\n");
      std::cerr << "FAIL equivalence case " << n << ": max abs error " << err
                << " (inputs dumped to " << (out / "counterexample.json").string() << ")\n";
      return 1;
    }
    std::cout << "case " << n << " M=" << c.modalities << " r=" << c.rank << " d_h=" << c.output_dim
              << " max_abs_error=" << err << '\n';
  }
  std::cout << "equivalence: " << cfg.cases << " cases, max abs error " << worst << '\n';

  lmf::Rng grng = lmf::make_rng(lmf::split_seed(cfg.seed, "verify-grad"));
  std::uniform_int_distribution<lmf::Index> dim(1, 5);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst_rel = 0.0;
  for (int n = 0; n < cfg.grad_cases; ++n) {
    std::vector<lmf::Index> raw{dim(grng), dim(grng)}, enc{dim(grng), dim(grng)};
    const lmf::Index dh = dim(grng) % 3 + 1;
    lmf::ModelParams<double> model = lmf::random_check_model<double>(raw, enc, dim(grng) % 3 + 1, dh, dh, grng());
    std::vector<lmf::VectorX<double>> xs;
    for (lmf::Index d : raw) {
      lmf::VectorX<double> x(d);
      for (lmf::Index i = 0; i < d; ++i) x[i] = unit(grng);
      xs.push_back(std::move(x));
    }
    if (lmf::relu_kink_margin(model, xs) < 1e-3) {
      --n;
      continue;
    }
    lmf::VectorX<double> y(dh);
    for (lmf::Index i = 0; i < dh; ++i) y[i] = unit(grng);
    lmf::GradCheckOutcome o = lmf::gradient_check(model, xs, y);
    worst_rel = std::max(worst_rel, o.max_rel_error);
    if (o.max_rel_error >= 1e-6) {
      std::cerr << "FAIL gradient case " << n << ": rel error " << o.max_rel_error << " at "
                << o.worst_param << '\n';
      return 1;
    }
  }
  std::cout << "gradients: " << cfg.grad_cases << " cases, max rel error " << worst_rel << '\n';
  write_text(out / "verify.json",
             json{{"cases", cfg.cases},
                  {"max_abs_error", worst},
                  {"grad_cases", cfg.grad_cases},
                  {"max_rel_error", worst_rel}}
                     .dump(2) +
                 "\n");
  return 0;
}

lmf::SyntheticTask task_from(const RunConfig& cfg) {
  lmf::SyntheticTask task;
  task.seed = lmf::split_seed(cfg.seed, "task");
  task.input_dims = cfg.dims;
  task.ground_truth_rank = cfg.ground_truth_rank;
  task.output_dim = cfg.output_dim;
  task.noise_std = cfg.noise_std;
  task.sample_count = cfg.samples;
  return task;
}

lmf::TrainOptions train_options_from(const RunConfig& cfg) {
  lmf::TrainOptions opt;
  opt.epochs = cfg.epochs;
  opt.batch_size = cfg.batch_size;
  opt.learning_rate = cfg.learning_rate;
  opt.momentum = cfg.momentum;
  opt.use_encoders = cfg.use_encoders;
  opt.seed = lmf::split_seed(cfg.seed, "train");
  return opt;
}

std::string curve_csv(const std::vector<lmf::EpochLoss>& curve) {
  std::ostringstream out;
  out << "epoch,train_mse,val_mse\n";
  for (const auto& e : curve) out << e.epoch << ',' << e.train_mse << ',' << e.val_mse << '\n';
  return out.str();
}

int cmd_train(const RunConfig& cfg) {
  fs::path out = prepare_out_dir(cfg);
  lmf::FusionConfig<double> fusion{cfg.dims, cfg.rank, cfg.output_dim, cfg.seed};
  try {
    lmf::TrainResult<double> res = lmf::train(task_from(cfg), fusion, train_options_from(cfg));
    write_text(out / "loss_curve.csv", curve_csv(res.curve));
    lmf::save_model((out / "model.bin").string(), res.model);
    std::cout << "trained " << cfg.epochs << " epochs: train MSE " << res.initial_train_mse()
              << " -> " << res.final_train_mse() << ", val MSE " << res.final_val_mse() << '\n';
    std::cout << "wrote " << (out / "loss_curve.csv").string() << " and " << (out / "model.bin").string()
              << '\n';
  } catch (const lmf::NonFiniteLoss& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

template <typename Scalar>
int run_bench(const RunConfig& cfg, const fs::path& out) {
  lmf::FusionConfig<Scalar> fusion{cfg.dims, cfg.rank, cfg.output_dim, cfg.seed};
  lmf::BenchOptions opt{cfg.reps, cfg.warmup};
  lmf::BenchReport lmf_report = lmf::bench_fusion(fusion, lmf::FusionMethod::LowRank, opt);
  lmf::BenchReport exp_report = lmf::bench_fusion(fusion, lmf::FusionMethod::Explicit, opt);

  std::ostringstream csv;
  csv << lmf::bench_csv_header() << '\n'
      << lmf::bench_csv_row(exp_report) << '\n'
      << lmf::bench_csv_row(lmf_report) << '\n';
  write_text(out / "bench.csv", csv.str());
  write_text(out / "bench.json",
             json::array({lmf::bench_json(exp_report), lmf::bench_json(lmf_report)}).dump(2) + "\n");

  const double ratio = lmf_report.forward_backward.ips() / exp_report.forward_backward.ips();
  std::cout << "params: explicit " << exp_report.parameter_count << ", lmf " << lmf_report.parameter_count
            << '\n'
            << "fwd IPS: explicit " << exp_report.forward.ips() << ", lmf " << lmf_report.forward.ips()
            << '\n'
            << "fwd+bwd IPS: explicit " << exp_report.forward_backward.ips() << ", lmf "
            << lmf_report.forward_backward.ips() << " (ratio " << ratio << "x)\n"
            << "wrote " << (out / "bench.csv").string() << '\n';
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  fs::path out = prepare_out_dir(cfg);
  return cfg.precision == "f32" ? run_bench<float>(cfg, out) : run_bench<double>(cfg, out);
}

int cmd_sweep(const RunConfig& cfg) {
  fs::path out = prepare_out_dir(cfg);
  lmf::FusionConfig<double> fusion{cfg.dims, cfg.rank, cfg.output_dim, cfg.seed};
  std::vector<lmf::SweepResult> results =
      lmf::rank_sweep(task_from(cfg), fusion, train_options_from(cfg), cfg.ranks, cfg.sweep_seeds);
  write_text(out / "sweep.csv", lmf::sweep_csv_header() + "\n" + lmf::sweep_csv_rows(results));
  write_text(out / "sweep.json", lmf::sweep_json(results).dump(2) + "\n");
  for (const auto& row : results)
    std::cout << "rank " << row.rank << ": mean final train MSE " << row.mean_final_train_mse
              << " (std " << row.std_final_train_mse << ")\n";
  std::cout << "wrote " << (out / "sweep.csv").string() << '\n';
  return 0;
}

std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i < argc - 1; ++i)
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty()) apply_config_file(config_path, cfg);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Low-rank multimodal fusion: verification, training and benchmarks"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override file values");

  auto add_common = [&](CLI::App* sub) {
    // also accepted after the subcommand; the file itself is pre-scanned
    sub->add_option("--config", config_path, "JSON config file; flags override file values");
    sub->add_option("--seed", cfg.seed, "root RNG seed");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--dims", cfg.dims, "per-modality input dims (pre-append)");
    sub->add_option("--rank", cfg.rank, "fusion rank r");
    sub->add_option("--dh", cfg.output_dim, "fusion output dim d_h");
    sub->add_option("--precision", cfg.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
  };

  CLI::App* verify = app.add_subcommand("verify", "run equivalence and gradient checks");
  add_common(verify);
  verify->add_option("--cases", cfg.cases, "number of random equivalence cases");
  verify->add_option("--grad-cases", cfg.grad_cases, "number of gradient-check cases");
  verify->add_flag("--inject-corruption", cfg.inject_corruption,
                   "force one failing case (tests the failure path)");

  CLI::App* train = app.add_subcommand("train", "train on a synthetic task");
  add_common(train);
  train->add_option("--epochs", cfg.epochs, "training epochs");
  train->add_option("--lr", cfg.learning_rate, "learning rate");
  train->add_option("--momentum", cfg.momentum, "SGD momentum");
  train->add_option("--batch", cfg.batch_size, "mini-batch size");
  train->add_option("--noise", cfg.noise_std, "target noise stddev");
  train->add_option("--samples", cfg.samples, "synthetic sample count");
  train->add_option("--gt-rank", cfg.ground_truth_rank, "ground-truth rank");
  train->add_flag("--encoders", cfg.use_encoders, "train feed-forward encoders too");

  CLI::App* bench = app.add_subcommand("bench", "benchmark explicit vs low-rank fusion");
  add_common(bench);
  bench->add_option("--reps", cfg.reps, "measured repetitions");
  bench->add_option("--warmup", cfg.warmup, "warmup repetitions");

  CLI::App* sweep = app.add_subcommand("sweep", "rank sweep over a synthetic task");
  add_common(sweep);
  sweep->add_option("--ranks", cfg.ranks, "ranks to sweep");
  sweep->add_option("--sweep-seeds", cfg.sweep_seeds, "one training run per seed");
  sweep->add_option("--epochs", cfg.epochs, "training epochs");
  sweep->add_option("--lr", cfg.learning_rate, "learning rate");
  sweep->add_option("--samples", cfg.samples, "synthetic sample count");
  sweep->add_option("--gt-rank", cfg.ground_truth_rank, "ground-truth rank");
  sweep->add_option("--noise", cfg.noise_std, "target noise stddev");

  try {
    app.parse(argc, argv);
    validate(cfg);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*verify) return cmd_verify(cfg);
    if (*train) return cmd_train(cfg);
    if (*bench) return cmd_bench(cfg);
    if (*sweep) return cmd_sweep(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
