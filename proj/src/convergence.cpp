#include "vbsgpr/convergence.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "vbsgpr/gradients.hpp"
#include "vbsgpr/metrics.hpp"
#include "vbsgpr/optimizer.hpp"
#include "vbsgpr/rng.hpp"

namespace vbsgpr {
namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ReferenceResult {
  VariationalState<double> state;
  double elbo = 0;
  Index iterations = 0;
};

// Deterministic alternating ascent: the inducing distribution is set to its
// closed-form optimum at the current hyperparameters, then a backtracking
// gradient step moves the hyperparameters; a step is kept only when the exact
// bound improves. Every accepted iterate is therefore exactly stationary in
// (m, S), and the alternation lands on a joint stationary point far faster
// than full gradient ascent.
ReferenceResult reference_optimize(const VariationalState<double>& init,
                                   const InducingSet<double>& ind,
                                   const TrainingBlocks<double>& tb,
                                   const HyperPrior<double>& prior, Index max_iterations,
                                   double tolerance) {
  auto assign_qstar = [&](VariationalState<double>& st) {
    const QStar<double> qs = optimal_q_star(ind, tb, st.hyper);
    Eigen::LLT<MatrixX<double>> llt(qs.S);
    if (llt.info() != Eigen::Success)
      throw NumericError("reference: optimal inducing covariance is not positive definite");
    st.m = qs.m;
    st.S_chol = MatrixX<double>(llt.matrixL());
  };

  ReferenceResult ref;
  ref.state = init;
  try {
    assign_qstar(ref.state);
  } catch (const NumericError&) {
    ref.state = init;
  }
  ref.elbo = elbo_full(ref.state, ind, tb, prior);
  double eta = 0.1;
  Index stall = 0;
  for (Index it = 0; it < max_iterations; ++it) {
    GradResult<double> gr = exact_gradient(ref.state, ind, tb, prior);
    gr.grad.d_m.setZero();
    gr.grad.d_S.setZero();
    bool accepted = false;
    VariationalState<double> candidate;
    double candidate_elbo = 0;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      StepSchedule<double> sched;
      sched.a = eta;
      try {
        candidate = apply_step(ref.state, gr.grad, sched, Index(0));
        assign_qstar(candidate);
        candidate_elbo = elbo_full(candidate, ind, tb, prior);
        if (candidate_elbo > ref.elbo)
          accepted = true;
        else
          eta *= 0.5;
      } catch (const NumericError&) {
        eta *= 0.5;
      }
    }
    if (!accepted) break;
    const double improvement = candidate_elbo - ref.elbo;
    ref.state = candidate;
    ref.elbo = candidate_elbo;
    ref.iterations = it + 1;
    eta = std::min(eta * 1.5, 1.0);
    if (improvement <= tolerance * (std::abs(ref.elbo) + 1.0))
      ++stall;
    else
      stall = 0;
    if (stall >= 3) break;
  }
  return ref;
}

ConvergenceRow make_row(Index iter, const VariationalState<double>& state,
                        const VariationalState<double>& reference,
                        const InducingSet<double>& ind, const TrainingBlocks<double>& tb,
                        const HyperPrior<double>& prior) {
  ConvergenceRow row;
  row.iter = iter;
  row.kl_inducing = gaussian_kl(state.m, state.S(), reference.m, reference.S());
  row.kl_hyper = hyper_pair_kl(state.hyper, reference.hyper);
  const QStar<double> qs = optimal_q_star(ind, tb, state.hyper);
  row.kl_to_qstar = gaussian_kl(state.m, state.S(), qs.m, qs.S);
  row.elbo = elbo_full(state, ind, tb, prior);
  return row;
}

}  // namespace

double trend_slope(const std::vector<double>& t, const std::vector<double>& values) {
  require(t.size() == values.size(), "trend_slope: length mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  Index n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(values[i])) continue;
    sx += t[i];
    sy += values[i];
    sxx += t[i] * t[i];
    sxy += t[i] * values[i];
    ++n;
  }
  if (n < 2) return 0;
  const double denom = n * sxx - sx * sx;
  if (denom == 0) return 0;
  return (n * sxy - sx * sy) / denom;
}

ConvergenceResult convergence_study(const Dataset& data, const ConvergenceOptions& options) {
  Rng rng(options.train.config.seed);
  TrainSetup setup = build_setup(data, options.train, rng);
  const Index B = setup.tb.block_count();

  ReferenceResult ref =
      reference_optimize(setup.init, setup.inducing, setup.tb, setup.prior,
                         options.reference_max_iterations, options.reference_tolerance);

  ConvergenceResult result;
  result.reference_elbo = ref.elbo;
  result.reference_iterations = ref.iterations;

  VariationalState<double> state = setup.init;
  Stepper<double> stepper(options.train.config, setup.inducing.count(), data.dim());
  const Index log_every = options.log_every > 0 ? options.log_every : 1;
  std::vector<Index> batch(
      static_cast<std::size_t>(options.train.config.batch_sample_count));
  for (Index t = 0; t < options.train.config.iterations; ++t) {
    if (t % log_every == 0)
      result.rows.push_back(
          make_row(t, state, ref.state, setup.inducing, setup.tb, setup.prior));
    for (auto& b : batch) b = rng.uniform_int(B);
    GradResult<double> gr = stochastic_gradient(state, batch, setup.inducing, setup.tb,
                                                setup.prior, options.train.threads);
    state = stepper.step(state, gr.grad, t);
  }
  result.rows.push_back(make_row(options.train.config.iterations, state, ref.state,
                                 setup.inducing, setup.tb, setup.prior));

  std::vector<double> iters, log_kl_s, log_kl_h;
  for (const ConvergenceRow& row : result.rows) {
    iters.push_back(static_cast<double>(row.iter));
    log_kl_s.push_back(row.kl_inducing > 0 ? std::log(row.kl_inducing) : -700.0);
    log_kl_h.push_back(row.kl_hyper > 0 ? std::log(row.kl_hyper) : -700.0);
  }
  result.slope_log_kl_inducing = trend_slope(iters, log_kl_s);
  result.slope_log_kl_hyper = trend_slope(iters, log_kl_h);
  return result;
}

void write_convergence_csv(const std::string& path, const ConvergenceResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path + "' for writing");
  out << "iter,kl_inducing,kl_hyper,kl_to_qstar,elbo\n";
  for (const ConvergenceRow& row : result.rows)
    out << row.iter << ',' << fmt(row.kl_inducing) << ',' << fmt(row.kl_hyper) << ','
        << fmt(row.kl_to_qstar) << ',' << fmt(row.elbo) << '\n';
  if (!out) throw ParseError("write to '" + path + "' failed");
}

}  // namespace vbsgpr
