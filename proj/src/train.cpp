#include "vbsgpr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "vbsgpr/expectations.hpp"
#include "vbsgpr/gradients.hpp"
#include "vbsgpr/rng.hpp"

namespace vbsgpr {
namespace {

constexpr double kNoiseFloorFraction = 1e-6;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double population_std(const Eigen::VectorXd& y) {
  if (y.size() == 0) return 1.0;
  const double sd = std::sqrt((y.array() - y.mean()).square().mean());
  return sd > 1e-12 ? sd : 1e-12;
}

// Mini-batch value of the bound terms that depend on the noise model: the
// per-block data terms plus their log-determinant and quadratic constants.
// Used as a finite-difference objective when the noise is being adapted.
double sampled_noise_objective(const VariationalState<double>& state,
                               const InducingSet<double>& ind,
                               const TrainingBlocks<double>& tb,
                               const std::vector<Index>& batch,
                               const NoiseKernelParams<double>& np) {
  const detail::GradContext<double> ctx = detail::make_grad_context(state, ind);
  EpsFactor<double> eps;
  if (tb.variant != Variant::DTC) eps = factor_eps_uu(np);
  double total = 0;
  for (Index s : batch) {
    const BlockData<double>& bd = tb.data[static_cast<std::size_t>(s)];
    NoiseBlock<double> nb = tb.variant == Variant::DTC
                                ? build_noise_block(tb.variant, bd.X, np)
                                : build_noise_block(tb.variant, bd.X, np, eps);
    BlockExpectations<double> be = compute_block_expectations(
        ind.rotated_inputs, bd.X, nb, state.hyper, ind.prior_scale);
    const Eigen::VectorXd cy = apply_inverse(nb, bd.y);
    const double bound = ctx.im.dot(be.omega * cy) -
                         0.5 * ctx.im.dot(be.psi * ctx.im) -
                         0.5 * ctx.W.cwiseProduct(be.psi).sum() -
                         0.5 * be.upsilon_trace +
                         0.5 * ctx.A.cwiseProduct(be.psi).sum();
    const double n = static_cast<double>(bd.y.size());
    total += bound - 0.5 * n * std::log(2.0 * std::numbers::pi_v<double>) -
             0.5 * nb.logdet - 0.5 * bd.y.dot(cy);
  }
  return total;
}

Eigen::VectorXd encode_noise(const NoiseKernelParams<double>& np, Variant variant) {
  if (variant == Variant::DTC) {
    Eigen::VectorXd p(1);
    p[0] = std::log(np.noise_std);
    return p;
  }
  const Index d = np.eps_inverted_lengthscales.size();
  Eigen::VectorXd p(2 + d);
  p[0] = std::log(np.noise_std);
  p[1] = std::log(np.eps_signal_std);
  for (Index k = 0; k < d; ++k) p[2 + k] = std::log(np.eps_inverted_lengthscales[k]);
  return p;
}

NoiseKernelParams<double> decode_noise(const Eigen::VectorXd& p,
                                       const NoiseKernelParams<double>& base,
                                       Variant variant, double noise_floor) {
  NoiseKernelParams<double> np = base;
  np.noise_std = std::max(std::exp(p[0]), noise_floor);
  if (variant != Variant::DTC) {
    np.eps_signal_std = std::exp(p[1]);
    for (Index k = 0; k < np.eps_inverted_lengthscales.size(); ++k)
      np.eps_inverted_lengthscales[k] = std::exp(p[2 + k]);
  }
  return np;
}

// Central-difference ascent step on the noise parameters in log space. The
// full noise structure is rebuilt afterwards, so this runs at a coarse
// cadence rather than every iteration.
void update_noise(TrainSetup& setup, const VariationalState<double>& state,
                  const std::vector<Index>& batch, const TrainOptions& options,
                  Index t) {
  const Variant variant = options.variant;
  const double noise_floor = kNoiseFloorFraction * setup.output_std;
  Eigen::VectorXd p = encode_noise(setup.noise, variant);
  Eigen::VectorXd g(p.size());
  const double h = 1e-4;
  for (Index i = 0; i < p.size(); ++i) {
    Eigen::VectorXd up = p, down = p;
    up[i] += h;
    down[i] -= h;
    const double plus = sampled_noise_objective(
        state, setup.inducing, setup.tb, batch,
        decode_noise(up, setup.noise, variant, noise_floor));
    const double minus = sampled_noise_objective(
        state, setup.inducing, setup.tb, batch,
        decode_noise(down, setup.noise, variant, noise_floor));
    g[i] = (plus - minus) / (2 * h);
  }
  const double eta = options.noise_step *
                     (options.config.schedule.eta(t) / options.config.schedule.a);
  Eigen::VectorXd delta = (eta * g).cwiseMax(-0.25).cwiseMin(0.25);
  NoiseKernelParams<double> next =
      decode_noise(p + delta, setup.noise, variant, noise_floor);
  try {
    std::vector<BlockData<double>> blocks = setup.tb.data;
    setup.tb = build_training_blocks(variant, std::move(blocks), next);
    setup.noise = next;
  } catch (const NumericError&) {
    warn("noise update rejected at iteration " + std::to_string(t) +
         "; keeping previous noise parameters");
  }
}

}  // namespace

HyperPrior<double> prior_from_preset(const std::string& preset, Index dim) {
  if (preset == "standard") return HyperPrior<double>::standard(dim);
  if (preset == "paper") return HyperPrior<double>::centered_at_one(dim);
  throw ParseError("unknown prior preset '" + preset + "' (expected standard or paper)");
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "iter,seconds,elbo_estimate,|grad_m|,|grad_S|,|grad_nu|,|grad_xi|,"
         "|grad_alpha|,|grad_beta|\n";
  for (const TraceRow& r : rows) {
    out << r.iter << ',' << fmt(r.seconds) << ',' << fmt(r.elbo_estimate) << ','
        << fmt(r.grad_m_norm) << ',' << fmt(r.grad_S_norm) << ',' << fmt(r.grad_nu_norm)
        << ',' << fmt(r.grad_xi_norm) << ',' << fmt(r.grad_alpha_norm) << ','
        << fmt(r.grad_beta_norm) << '\n';
  }
  if (!out) throw ParseError("write to '" + path + "' failed");
}

TrainSetup build_setup(const Dataset& data, const TrainOptions& options, Rng& rng) {
  const Index n = data.count();
  const Index d = data.dim();
  require(n >= 1, "train: dataset is empty");
  require(d >= 1, "train: dataset has no features");
  require(options.blocks >= 1 && options.blocks <= n,
          "train: block count must lie in [1, " + std::to_string(n) + "]");
  require(options.inducing >= 1 && options.inducing <= n,
          "train: inducing count must lie in [1, " + std::to_string(n) + "]");
  require(options.config.batch_sample_count >= 1, "train: batch size must be positive");
  require(options.zeta > 0, "train: zeta must be positive");
  require(options.eps_lengthscale > 0, "train: epsilon lengthscale must be positive");
  if (options.variant != Variant::DTC)
    require(options.eps_signal_std > 0,
            "train: epsilon signal scale must be positive for structured noise");

  TrainSetup setup;
  setup.partition =
      kmeans_partition(data.X, options.blocks, options.config.seed ^ 0x9E3779B97F4A7C15ull);
  setup.output_std = population_std(data.y);

  NoiseKernelParams<double> np;
  np.noise_std = std::max(options.noise_std, kNoiseFloorFraction * setup.output_std);
  np.eps_signal_std = options.eps_signal_std;
  np.eps_inverted_lengthscales = Eigen::VectorXd::Constant(d, 1.0 / options.eps_lengthscale);
  if (options.variant != Variant::DTC)
    np.eps_inducing_inputs =
        kmeans_partition(data.X, options.inducing, options.config.seed ^ 0xC2B2AE3D27D4EB4Full)
            .centroids;
  else
    np.eps_inducing_inputs.resize(0, d);
  setup.noise = np;

  std::vector<BlockData<double>> blocks;
  blocks.reserve(setup.partition.blocks.size());
  for (const auto& members : setup.partition.blocks) {
    BlockData<double> b;
    const Index nb = static_cast<Index>(members.size());
    b.X.resize(nb, d);
    b.y.resize(nb);
    for (Index r = 0; r < nb; ++r) {
      b.X.row(r) = data.X.row(members[static_cast<std::size_t>(r)]);
      b.y[r] = data.y[members[static_cast<std::size_t>(r)]];
    }
    blocks.push_back(std::move(b));
  }
  setup.tb = build_training_blocks(options.variant, std::move(blocks), np);

  // Inducing sites start at a random subset of the training inputs; the
  // initial rotation is the identity, so rotated coordinates equal inputs.
  std::vector<Index> pool(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < options.inducing; ++i) {
    const Index j = i + rng.uniform_int(n - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  Eigen::MatrixXd Z(options.inducing, d);
  for (Index i = 0; i < options.inducing; ++i)
    Z.row(i) = data.X.row(pool[static_cast<std::size_t>(i)]);
  setup.inducing_inputs = Z;
  setup.inducing = build_sigma_II(Z, options.zeta);
  setup.init = initial_state(setup.inducing, d, setup.output_std);
  setup.prior = prior_from_preset(options.prior_preset, d);
  return setup;
}

TrainResult train(const Dataset& data, const TrainOptions& options) {
  Rng rng(options.config.seed);
  TrainSetup setup = build_setup(data, options, rng);
  const Index B = setup.tb.block_count();
  VariationalState<double> state = setup.init;
  Stepper<double> stepper(options.config, setup.inducing.count(), data.dim());

  std::vector<TraceRow> trace;
  trace.reserve(static_cast<std::size_t>(options.config.iterations));
  const auto start = std::chrono::steady_clock::now();
  std::vector<Index> batch(static_cast<std::size_t>(options.config.batch_sample_count));
  for (Index t = 0; t < options.config.iterations; ++t) {
    for (auto& b : batch) b = rng.uniform_int(B);
    GradResult<double> gr = stochastic_gradient(state, batch, setup.inducing, setup.tb,
                                                setup.prior, options.threads);
    TraceRow row;
    row.iter = t;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.elbo_estimate = gr.elbo_estimate;
    row.grad_m_norm = gr.grad.d_m.norm();
    row.grad_S_norm = gr.grad.d_S.norm();
    row.grad_nu_norm = gr.grad.d_nu.norm();
    row.grad_xi_norm = gr.grad.d_xi.norm();
    row.grad_alpha_norm = std::abs(gr.grad.d_alpha);
    row.grad_beta_norm = std::abs(gr.grad.d_beta);
    trace.push_back(row);
    state = stepper.step(state, gr.grad, t);
    if (options.learn_noise && options.noise_update_every > 0 &&
        (t + 1) % options.noise_update_every == 0)
      update_noise(setup, state, batch, options, t);
  }

  TrainResult out;
  out.trace = std::move(trace);
  out.inducing = setup.inducing;
  out.state = state;
  out.partition = setup.partition;
  out.final_elbo_estimate = elbo_full(state, setup.inducing, setup.tb, setup.prior);

  ModelArtifact& a = out.artifact;
  a.variant = options.variant;
  a.dim = data.dim();
  a.zeta = options.zeta;
  a.inducing_inputs = setup.inducing_inputs;
  a.m = state.m;
  a.S_chol = state.S_chol;
  a.nu = state.hyper.nu;
  a.xi = state.hyper.xi;
  a.alpha = state.hyper.alpha;
  a.beta = state.hyper.beta;
  a.noise = setup.noise;
  a.norm = data.norm;
  a.block_centroids = setup.partition.centroids;
  a.feature_names = data.feature_names;
  a.target_name = data.target_name;
  a.blocks = options.blocks;
  a.iterations = options.config.iterations;
  a.batch = options.config.batch_sample_count;
  a.seed = options.config.seed;
  a.step_a = options.config.schedule.a;
  a.step_tau = options.config.schedule.tau;
  a.step_kappa = options.config.schedule.kappa;
  a.step_mode = options.config.mode == StepMode::Adaptive ? "adagrad" : "plain";
  a.prior_preset = options.prior_preset;
  if (options.variant == Variant::PIC) a.train_blocks = setup.tb.data;
  return out;
}

}  // namespace vbsgpr
