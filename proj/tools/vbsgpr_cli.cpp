#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vbsgpr/convergence.hpp"
#include "vbsgpr/csv.hpp"
#include "vbsgpr/dataset.hpp"
#include "vbsgpr/metrics.hpp"
#include "vbsgpr/model_io.hpp"
#include "vbsgpr/predict.hpp"
#include "vbsgpr/train.hpp"

namespace {

using namespace vbsgpr;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct TrainFlags {
  std::string data;
  std::string target;
  std::string variant = "dtc";
  Index blocks = 10;
  Index inducing = 50;
  Index iters = 1000;
  Index batch = 1;
  std::uint64_t seed = 0;
  double step_a = 0.01;
  double step_tau = 100.0;
  double step_kappa = 0.75;
  std::string prior_preset = "standard";
  double zeta = 1.0;
  double noise_std = 0.1;
  double eps_std = 0.3;
  double eps_lengthscale = 1.0;
  bool learn_noise = false;
  Index noise_update_every = 20;
  bool adaptive = false;
  int threads = 1;
  bool no_normalize = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--data", f.data, "training CSV with a header row")->required();
  cmd->add_option("--target", f.target, "name of the target column")->required();
  cmd->add_option("--variant", f.variant, "dtc, fic, fitc, pitc or pic");
  cmd->add_option("--blocks", f.blocks, "number of training blocks B");
  cmd->add_option("--inducing", f.inducing, "number of inducing sites");
  cmd->add_option("--iters", f.iters, "stochastic ascent iterations");
  cmd->add_option("--batch", f.batch, "blocks sampled per iteration");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--step-a", f.step_a, "step size numerator");
  cmd->add_option("--step-tau", f.step_tau, "step size delay");
  cmd->add_option("--step-kappa", f.step_kappa, "step size decay exponent");
  cmd->add_option("--prior-preset", f.prior_preset, "standard or paper");
  cmd->add_option("--zeta", f.zeta, "inducing prior scale");
  cmd->add_option("--noise-std", f.noise_std, "observation noise scale");
  cmd->add_option("--eps-std", f.eps_std, "correlated noise signal scale");
  cmd->add_option("--eps-lengthscale", f.eps_lengthscale, "correlated noise lengthscale");
  auto* learn = cmd->add_flag("--learn-noise", f.learn_noise, "adapt the noise model during training");
  cmd->add_flag("--fix-noise{false}", f.learn_noise, "keep the noise model fixed (default)")
      ->excludes(learn);
  cmd->add_option("--noise-update-every", f.noise_update_every,
                  "iterations between noise updates when learning");
  cmd->add_flag("--adaptive", f.adaptive, "per-coordinate adaptive step scaling");
  cmd->add_option("--threads", f.threads, "worker threads for batch gradients");
  cmd->add_flag("--no-normalize", f.no_normalize, "skip input/output standardization");
}

TrainOptions to_train_options(const TrainFlags& f) {
  TrainOptions opt;
  opt.variant = parse_variant(f.variant);
  opt.blocks = f.blocks;
  opt.inducing = f.inducing;
  opt.config.iterations = f.iters;
  opt.config.batch_sample_count = f.batch;
  opt.config.seed = f.seed;
  opt.config.schedule.a = f.step_a;
  opt.config.schedule.tau = f.step_tau;
  opt.config.schedule.kappa = f.step_kappa;
  opt.config.mode = f.adaptive ? StepMode::Adaptive : StepMode::Plain;
  opt.prior_preset = f.prior_preset;
  opt.zeta = f.zeta;
  opt.noise_std = f.noise_std;
  opt.eps_signal_std = f.eps_std;
  opt.eps_lengthscale = f.eps_lengthscale;
  opt.learn_noise = f.learn_noise;
  opt.noise_update_every = f.noise_update_every;
  opt.threads = f.threads;
  return opt;
}

// Reads the rows of `path`, picking out the model's feature columns by name.
Eigen::MatrixXd read_feature_matrix(const std::string& path, const ModelArtifact& artifact) {
  CsvTable table = read_csv(path);
  std::vector<Index> cols;
  for (const std::string& name : artifact.feature_names) {
    const Index idx = table.column_index(name);
    if (idx < 0)
      throw DimensionError(path + ": missing feature column '" + name + "' required by the model");
    cols.push_back(idx);
  }
  const Index n = static_cast<Index>(table.rows.size());
  const Index d = static_cast<Index>(cols.size());
  Eigen::MatrixXd raw(n, d);
  for (Index r = 0; r < n; ++r) {
    for (Index j = 0; j < d; ++j) {
      const std::string& cell =
          table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])];
      char* end = nullptr;
      raw(r, j) = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size())
        throw ParseError(path + ": row " + std::to_string(r + 2) + ": bad value '" + cell +
                         "' in column '" + artifact.feature_names[static_cast<std::size_t>(j)] + "'");
    }
  }
  return raw;
}

Eigen::VectorXd read_target_vector(const std::string& path, const std::string& target) {
  CsvTable table = read_csv(path);
  const Index idx = table.column_index(target);
  if (idx < 0) throw ParseError(path + ": target column '" + target + "' not found");
  const Index n = static_cast<Index>(table.rows.size());
  Eigen::VectorXd y(n);
  for (Index r = 0; r < n; ++r) {
    const std::string& cell = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(idx)];
    char* end = nullptr;
    y[r] = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size())
      throw ParseError(path + ": row " + std::to_string(r + 2) + ": bad value '" + cell +
                       "' in column '" + target + "'");
  }
  return y;
}

struct PredictionRun {
  Eigen::VectorXd mean;      // de-normalized
  Eigen::VectorXd variance;  // de-normalized
  double seconds = 0;
};

PredictionRun run_predictions(const LoadedModel& lm, const Eigen::MatrixXd& raw,
                              Index samples, bool observation_noise, std::uint64_t seed) {
  const ModelArtifact& a = lm.artifact;
  const Eigen::MatrixXd X = normalize_inputs(a.norm, raw);
  const Index n = X.rows();
  PredictionRun run;
  run.mean.resize(n);
  run.variance.resize(n);
  const bool pic = a.variant == Variant::PIC && !a.train_blocks.empty();
  const PredictContext<double> ctx = make_predict_context(lm.state, lm.inducing);
  Rng rng(seed);
  const double obs_var = a.noise.noise_std * a.noise.noise_std;
  const auto start = std::chrono::steady_clock::now();
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    PredictiveResult<double> pr;
    if (pic) {
      const Index b = assign_test_block(x, a.block_centroids);
      pr = predict_pic(lm.state, lm.inducing, a.train_blocks[static_cast<std::size_t>(b)],
                       lm.block_noise[static_cast<std::size_t>(b)], x, samples, rng);
    } else {
      pr = predict_analytic(lm.state, lm.inducing, ctx, x);
    }
    double variance = pr.variance + (observation_noise ? obs_var : 0.0);
    run.mean[i] = denormalize_mean(a.norm, pr.mean);
    run.variance[i] = denormalize_variance(a.norm, variance);
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

int cmd_train(const TrainFlags& f, const std::string& model_path, const std::string& trace_path) {
  IngestOptions ingest;
  ingest.normalize = !f.no_normalize;
  Dataset data = ingest_csv(f.data, f.target, ingest);
  TrainResult result = train(data, to_train_options(f));
  save_model(model_path, result.artifact);
  if (!trace_path.empty()) write_trace_csv(trace_path, result.trace);
  std::cout << "trained " << variant_name(result.artifact.variant) << " model on "
            << data.count() << " rows (" << data.dim() << " features)\n"
            << "final bound " << fmt(result.final_elbo_estimate) << "\n"
            << "model written to " << model_path << "\n";
  if (!trace_path.empty()) std::cout << "trace written to " << trace_path << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, Index samples, bool observation_noise,
                std::uint64_t seed) {
  LoadedModel lm = load_and_instantiate(model_path);
  Eigen::MatrixXd raw = read_feature_matrix(data_path, lm.artifact);
  PredictionRun run = run_predictions(lm, raw, samples, observation_noise, seed);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + out_path + "' for writing");
  out << "mean,variance\n";
  for (Index i = 0; i < run.mean.size(); ++i)
    out << fmt(run.mean[i]) << ',' << fmt(run.variance[i]) << '\n';
  if (!out) throw ParseError("write to '" + out_path + "' failed");
  std::cout << "wrote " << run.mean.size() << " predictions to " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& target_override, const std::string& out_path,
                 Index samples, bool observation_noise, std::uint64_t seed) {
  LoadedModel lm = load_and_instantiate(model_path);
  const std::string target =
      target_override.empty() ? lm.artifact.target_name : target_override;
  Eigen::MatrixXd raw = read_feature_matrix(data_path, lm.artifact);
  Eigen::VectorXd y = read_target_vector(data_path, target);
  PredictionRun run = run_predictions(lm, raw, samples, observation_noise, seed);

  MetricReport<double> report;
  report.n_test = y.size();
  report.rmse = rmse(run.mean, y);
  report.mnlp = mnlp(run.mean, run.variance, y);
  report.wall_time_seconds = run.seconds;
  std::cout << "n_test " << report.n_test << "\n"
            << "rmse " << fmt(report.rmse) << "\n"
            << "mnlp " << fmt(report.mnlp) << "\n"
            << "seconds " << fmt(report.wall_time_seconds) << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + out_path + "' for writing");
    out << "n_test,rmse,mnlp,seconds\n"
        << report.n_test << ',' << fmt(report.rmse) << ',' << fmt(report.mnlp) << ','
        << fmt(report.wall_time_seconds) << '\n';
  }
  return 0;
}

int cmd_diagnose(const TrainFlags& f, const std::string& out_path, Index log_every,
                 Index ref_iters) {
  IngestOptions ingest;
  ingest.normalize = !f.no_normalize;
  Dataset data = ingest_csv(f.data, f.target, ingest);
  ConvergenceOptions opt;
  opt.train = to_train_options(f);
  opt.log_every = log_every;
  opt.reference_max_iterations = ref_iters;
  ConvergenceResult result = convergence_study(data, opt);
  write_convergence_csv(out_path, result);
  const ConvergenceRow& first = result.rows.front();
  const ConvergenceRow& last = result.rows.back();
  std::cout << "reference bound " << fmt(result.reference_elbo) << " after "
            << result.reference_iterations << " full-gradient iterations\n"
            << "kl_inducing " << fmt(first.kl_inducing) << " -> " << fmt(last.kl_inducing)
            << "\n"
            << "kl_hyper " << fmt(first.kl_hyper) << " -> " << fmt(last.kl_hyper) << "\n"
            << "slope log kl_inducing " << fmt(result.slope_log_kl_inducing) << "\n"
            << "slope log kl_hyper " << fmt(result.slope_log_kl_hyper) << "\n"
            << "study written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational sparse Gaussian process regression"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  std::string train_model = "model.txt";
  std::string train_trace;
  CLI::App* train_cmd = app.add_subcommand("train", "fit a model to a CSV dataset");
  add_train_flags(train_cmd, train_flags);
  train_cmd->add_option("--model", train_model, "output model path");
  train_cmd->add_option("--trace", train_trace, "optional optimization trace CSV");

  std::string predict_model, predict_data, predict_out = "predictions.csv";
  Index predict_samples = 64;
  bool predict_obs = false;
  std::uint64_t predict_seed = 0;
  CLI::App* predict_cmd = app.add_subcommand("predict", "predict mean and variance per row");
  predict_cmd->add_option("--model", predict_model, "trained model file")->required();
  predict_cmd->add_option("--data", predict_data, "input CSV")->required();
  predict_cmd->add_option("--out", predict_out, "output CSV path");
  predict_cmd->add_option("--samples", predict_samples, "hyperparameter samples for PIC prediction");
  predict_cmd->add_flag("--observation-noise", predict_obs,
                        "include observation noise in the variance");
  predict_cmd->add_option("--seed", predict_seed, "random seed for sampled prediction");

  std::string eval_model, eval_data, eval_target, eval_out;
  Index eval_samples = 64;
  bool eval_obs = false;
  std::uint64_t eval_seed = 0;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "report rmse and mnlp on labeled data");
  eval_cmd->add_option("--model", eval_model, "trained model file")->required();
  eval_cmd->add_option("--data", eval_data, "labeled CSV")->required();
  eval_cmd->add_option("--target", eval_target, "target column (defaults to the one trained on)");
  eval_cmd->add_option("--out", eval_out, "optional metrics CSV");
  eval_cmd->add_option("--samples", eval_samples, "hyperparameter samples for PIC prediction");
  eval_cmd->add_flag("--observation-noise", eval_obs, "include observation noise in the variance");
  eval_cmd->add_option("--seed", eval_seed, "random seed for sampled prediction");

  TrainFlags diag_flags;
  std::string diag_out = "convergence.csv";
  Index diag_log_every = 50;
  Index diag_ref_iters = 2000;
  CLI::App* diag_cmd =
      app.add_subcommand("diagnose", "compare stochastic training against a converged reference");
  add_train_flags(diag_cmd, diag_flags);
  diag_cmd->add_option("--out", diag_out, "convergence study CSV path");
  diag_cmd->add_option("--log-every", diag_log_every, "iterations between logged divergences");
  diag_cmd->add_option("--ref-iters", diag_ref_iters, "iteration cap for the reference optimizer");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(train_flags, train_model, train_trace);
    if (*predict_cmd)
      return cmd_predict(predict_model, predict_data, predict_out, predict_samples, predict_obs,
                         predict_seed);
    if (*eval_cmd)
      return cmd_evaluate(eval_model, eval_data, eval_target, eval_out, eval_samples, eval_obs,
                          eval_seed);
    if (*diag_cmd) return cmd_diagnose(diag_flags, diag_out, diag_log_every, diag_ref_iters);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
