#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/expectations.hpp"
#include "vbsgpr/kernel.hpp"
#include "vbsgpr/noise.hpp"

namespace vbsgpr {

template <typename Scalar>
struct BlockData {
  MatrixX<Scalar> X;  // n_i x d, original input space
  VectorX<Scalar> y;  // n_i
};

// Partitioned training set with its noise covariances and the solves that
// every bound evaluation reuses: C_i^-1 y_i, y_i' C_i^-1 y_i and log|C_i|.
template <typename Scalar>
struct TrainingBlocks {
  Variant variant = Variant::DTC;
  std::vector<BlockData<Scalar>> data;
  std::vector<NoiseBlock<Scalar>> noise;
  std::vector<VectorX<Scalar>> cinv_y;
  Scalar y_quad = 0;
  Scalar noise_logdet = 0;
  Index total_count = 0;

  Index block_count() const { return static_cast<Index>(data.size()); }
};

template <typename Scalar>
TrainingBlocks<Scalar> build_training_blocks(
    Variant variant, std::vector<BlockData<Scalar>> blocks,
    const NoiseKernelParams<Scalar>& np) {
  TrainingBlocks<Scalar> tb;
  tb.variant = variant;
  tb.data = std::move(blocks);
  require(!tb.data.empty(), "build_training_blocks: no blocks");
  std::vector<MatrixX<Scalar>> inputs;
  inputs.reserve(tb.data.size());
  for (const auto& b : tb.data) {
    require(b.X.rows() == b.y.size(),
            "build_training_blocks: block inputs and targets disagree");
    require(b.X.rows() > 0, "build_training_blocks: empty block");
    inputs.push_back(b.X);
  }
  tb.noise = build_noise_blocks(variant, inputs, np);
  tb.cinv_y.reserve(tb.data.size());
  for (size_t i = 0; i < tb.data.size(); ++i) {
    tb.cinv_y.push_back(apply_inverse(tb.noise[i], tb.data[i].y));
    tb.y_quad += tb.data[i].y.dot(tb.cinv_y.back());
    tb.noise_logdet += tb.noise[i].logdet;
    tb.total_count += tb.data[i].y.size();
  }
  return tb;
}

// q(s_I) = N(m, S) with S kept as its Cholesky factor, plus the variational
// hyperparameter posterior.
template <typename Scalar>
struct VariationalState {
  VectorX<Scalar> m;
  MatrixX<Scalar> S_chol;  // lower triangular
  HyperVariational<Scalar> hyper;

  MatrixX<Scalar> S() const { return S_chol * S_chol.transpose(); }
  Scalar log_det_S() const {
    Scalar s = 0;
    for (Index i = 0; i < S_chol.rows(); ++i) s += std::log(S_chol(i, i));
    return 2 * s;
  }
};

// Independent Gaussian prior over the hyperparameters (lambda_1..d, sigma_f).
template <typename Scalar>
struct HyperPrior {
  VectorX<Scalar> nu_mean;
  VectorX<Scalar> nu_var;
  Scalar alpha_mean = 0;
  Scalar alpha_var = 1;

  // Standard normal over every coordinate.
  static HyperPrior standard(Index d) {
    HyperPrior p;
    p.nu_mean = VectorX<Scalar>::Zero(d);
    p.nu_var = VectorX<Scalar>::Ones(d);
    return p;
  }

  // Prior concentrated near one, variance 0.1 per coordinate.
  static HyperPrior centered_at_one(Index d) {
    HyperPrior p;
    p.nu_mean = VectorX<Scalar>::Ones(d);
    p.nu_var = VectorX<Scalar>::Constant(d, Scalar(0.1));
    p.alpha_mean = 1;
    p.alpha_var = Scalar(0.1);
    return p;
  }
};

// -KL(q(Lambda) q(sigma_f) || p), factorized-Gaussian closed form.
template <typename Scalar>
Scalar hyper_kl_term(const HyperVariational<Scalar>& h,
                     const HyperPrior<Scalar>& prior) {
  const Index d = h.dim();
  require(prior.nu_mean.size() == d && prior.nu_var.size() == d,
          "hyper_kl_term: prior dimension mismatch");
  Scalar s = 0;
  for (Index k = 0; k < d; ++k) {
    const Scalar dm = h.nu[k] - prior.nu_mean[k];
    s += Scalar(0.5) * (-dm * dm / prior.nu_var[k] -
                        h.xi[k] / prior.nu_var[k] +
                        std::log(h.xi[k] / prior.nu_var[k]) + 1);
  }
  const Scalar da = h.alpha - prior.alpha_mean;
  s += Scalar(0.5) * (-da * da / prior.alpha_var - h.beta / prior.alpha_var +
                      std::log(h.beta / prior.alpha_var) + 1);
  return s;
}

// -KL(q(s_I) || p(s_I)) where p(s_I) = N(0, Sigma_II).
template <typename Scalar>
Scalar inducing_kl_term(const VariationalState<Scalar>& state,
                        const InducingSet<Scalar>& ind) {
  const MatrixX<Scalar> S = state.S();
  const Scalar tr = ind.solve(S).trace();
  const Scalar quad = state.m.dot(ind.solve(state.m));
  return Scalar(0.5) * (state.log_det_S() - ind.log_det_sigma() +
                        Scalar(ind.count()) - tr - quad);
}

// Expectation matrices summed over every block, enough for the aggregated
// bound forms: Psi = sum_i Psi^i, omega_y = sum_i Omega_i C_i^-1 y_i, and the
// total Tr[C^-1 Upsilon].
template <typename Scalar>
struct AggregatedExpectations {
  MatrixX<Scalar> psi;
  VectorX<Scalar> omega_y;
  Scalar upsilon_trace = 0;
};

template <typename Scalar>
AggregatedExpectations<Scalar> aggregate_expectations(
    const InducingSet<Scalar>& ind, const TrainingBlocks<Scalar>& tb,
    const HyperVariational<Scalar>& h) {
  AggregatedExpectations<Scalar> agg;
  const Index m = ind.count();
  agg.psi = MatrixX<Scalar>::Zero(m, m);
  agg.omega_y = VectorX<Scalar>::Zero(m);
  for (Index i = 0; i < tb.block_count(); ++i) {
    const BlockExpectations<Scalar> e = compute_block_expectations(
        ind.rotated_inputs, tb.data[i].X, tb.noise[i], h, ind.prior_scale);
    agg.psi += e.psi;
    agg.omega_y.noalias() += e.omega * tb.cinv_y[i];
    agg.upsilon_trace += e.upsilon_trace;
  }
  return agg;
}

// Data-independent additive part of the bound. It depends on the noise
// parameters through log|C| and y'C^-1 y, so it is always carried explicitly
// rather than dropped.
template <typename Scalar>
Scalar elbo_constant(const TrainingBlocks<Scalar>& tb) {
  return Scalar(-0.5) * Scalar(tb.total_count) *
             std::log(2 * std::numbers::pi_v<Scalar>) -
         Scalar(0.5) * tb.noise_logdet - Scalar(0.5) * tb.y_quad;
}

// Evidence lower bound via the aggregated route: one Psi, one set of solves.
template <typename Scalar>
Scalar elbo_full(const VariationalState<Scalar>& state,
                 const InducingSet<Scalar>& ind,
                 const TrainingBlocks<Scalar>& tb,
                 const HyperPrior<Scalar>& prior) {
  const AggregatedExpectations<Scalar> agg =
      aggregate_expectations(ind, tb, state.hyper);
  const VectorX<Scalar> im = ind.solve(state.m);  // Sigma^-1 m
  const MatrixX<Scalar> S = state.S();
  const MatrixX<Scalar> SinvS = ind.solve(S);     // Sigma^-1 S
  const MatrixX<Scalar> W = ind.solve(SinvS.transpose());  // Sigma^-1 S Sigma^-1

  const Scalar fit = state.m.dot(ind.solve(agg.omega_y));
  const Scalar quad = im.dot(agg.psi * im);
  const Scalar strace = (W.cwiseProduct(agg.psi)).sum();
  const Scalar psi_trace = ind.solve(agg.psi).trace();

  const Scalar data_terms = fit - Scalar(0.5) * quad - Scalar(0.5) * strace -
                            Scalar(0.5) * agg.upsilon_trace +
                            Scalar(0.5) * psi_trace;
  require_finite(data_terms, "elbo data terms");
  const Scalar qs = inducing_kl_term(state, ind);
  require_finite(qs, "inducing KL term");
  const Scalar hk = hyper_kl_term(state.hyper, prior);
  require_finite(hk, "hyperparameter KL term");
  const Scalar c = elbo_constant(tb);
  require_finite(c, "bound constant");
  return c + data_terms + qs + hk;
}

// Per-block decomposition of the same bound. total recombines the pieces in a
// fixed order: constant, global, then blocks in index order.
template <typename Scalar>
struct ElboBreakdown {
  std::vector<Scalar> per_block;
  Scalar global = 0;    // inducing KL + hyperparameter KL
  Scalar constant = 0;  // elbo_constant
  Scalar total = 0;
};

template <typename Scalar>
ElboBreakdown<Scalar> elbo_decomposed(const VariationalState<Scalar>& state,
                                      const InducingSet<Scalar>& ind,
                                      const TrainingBlocks<Scalar>& tb,
                                      const HyperPrior<Scalar>& prior) {
  ElboBreakdown<Scalar> out;
  const VectorX<Scalar> im = ind.solve(state.m);
  const MatrixX<Scalar> S = state.S();
  const MatrixX<Scalar> W = ind.solve(ind.solve(S).transpose());

  out.per_block.reserve(tb.block_count());
  for (Index i = 0; i < tb.block_count(); ++i) {
    const BlockExpectations<Scalar> e = compute_block_expectations(
        ind.rotated_inputs, tb.data[i].X, tb.noise[i], state.hyper,
        ind.prior_scale);
    const Scalar fit = im.dot(e.omega * tb.cinv_y[i]);
    const Scalar quad = im.dot(e.psi * im);
    const Scalar strace = (W.cwiseProduct(e.psi)).sum();
    const Scalar psi_trace = ind.solve(e.psi).trace();
    const Scalar li = fit - Scalar(0.5) * quad - Scalar(0.5) * strace -
                      Scalar(0.5) * e.upsilon_trace + Scalar(0.5) * psi_trace;
    require_finite(li, "per-block bound term");
    out.per_block.push_back(li);
  }
  out.global = inducing_kl_term(state, ind) + hyper_kl_term(state.hyper, prior);
  out.constant = elbo_constant(tb);
  out.total = out.constant + out.global;
  for (const Scalar li : out.per_block) out.total += li;
  return out;
}

// Maximizer of the bound over q(s_I) at fixed hyperparameter posterior:
// m* = Sigma (Sigma + Psi)^-1 Omega C^-1 y, S* = Sigma (Sigma + Psi)^-1 Sigma.
template <typename Scalar>
struct QStar {
  VectorX<Scalar> m;
  MatrixX<Scalar> S;
};

template <typename Scalar>
QStar<Scalar> optimal_q_star(const InducingSet<Scalar>& ind,
                             const TrainingBlocks<Scalar>& tb,
                             const HyperVariational<Scalar>& h) {
  const AggregatedExpectations<Scalar> agg = aggregate_expectations(ind, tb, h);
  MatrixX<Scalar> apb = ind.sigma + agg.psi;
  const auto llt = robust_llt(apb, "Sigma + Psi");
  QStar<Scalar> q;
  q.m = ind.sigma * llt.solve(agg.omega_y);
  q.S = ind.sigma * llt.solve(ind.sigma);
  q.S = ((q.S + q.S.transpose()) * Scalar(0.5)).eval();
  return q;
}

// Bound with q(s_I) collapsed to its optimum; equals elbo_full at q* exactly
// (zero additive offset between the two forms as implemented).
template <typename Scalar>
Scalar elbo_reduced(const HyperVariational<Scalar>& h,
                    const InducingSet<Scalar>& ind,
                    const TrainingBlocks<Scalar>& tb,
                    const HyperPrior<Scalar>& prior) {
  const AggregatedExpectations<Scalar> agg = aggregate_expectations(ind, tb, h);
  MatrixX<Scalar> apb = ind.sigma + agg.psi;
  const auto llt = robust_llt(apb, "Sigma + Psi");
  const Scalar fit = agg.omega_y.dot(llt.solve(agg.omega_y));
  const Scalar psi_trace = ind.solve(agg.psi).trace();
  const Scalar bracket = fit - agg.upsilon_trace + psi_trace -
                         llt_log_det(llt) + ind.log_det_sigma();
  require_finite(bracket, "reduced bound bracket");
  return Scalar(0.5) * bracket + elbo_constant(tb) + hyper_kl_term(h, prior);
}

}  // namespace vbsgpr
