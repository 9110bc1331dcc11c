#pragma once

#include <cmath>
#include <cstdint>

#include "vbsgpr/base.hpp"
#include "vbsgpr/elbo.hpp"
#include "vbsgpr/gradients.hpp"

namespace vbsgpr {

// Robbins-Monro step sizes eta_t = a / (1 + t/tau)^kappa. The defaults keep
// the divergent-sum / convergent-square-sum conditions (kappa in (1/2, 1]).
template <typename Scalar>
struct StepSchedule {
  Scalar a = Scalar(0.01);
  Scalar tau = Scalar(100);
  Scalar kappa = Scalar(0.75);

  Scalar eta(Index t) const {
    return a / std::pow(Scalar(1) + Scalar(t) / tau, kappa);
  }
};

enum class StepMode { Plain, Adaptive };

template <typename Scalar>
struct TrainConfig {
  Index iterations = 1000;
  Index batch_sample_count = 1;  // |S|, blocks sampled per iteration
  std::uint64_t seed = 0;
  StepSchedule<Scalar> schedule;
  StepMode mode = StepMode::Plain;
  Scalar adagrad_epsilon = Scalar(1e-8);
  // Cap on the norm of the transformed gradient before a step is taken.
  // Ill conditioned inducing sets can produce astronomically large gradients
  // early on; without a cap the step halving loop cannot shrink eta far
  // enough to recover. Non-positive disables the cap.
  Scalar clip_norm = Scalar(1e3);
};

// Prior-centered start: q(s_I) equals its prior, lengthscale posterior near
// the all-ones rotation, signal amplitude at the output scale of the data.
template <typename Scalar>
VariationalState<Scalar> initial_state(const InducingSet<Scalar>& ind, Index d,
                                       Scalar output_std) {
  VariationalState<Scalar> st;
  st.m = VectorX<Scalar>::Zero(ind.count());
  st.S_chol = ind.sigma_llt.matrixL();
  st.hyper.nu = VectorX<Scalar>::Ones(d);
  st.hyper.xi = VectorX<Scalar>::Constant(d, Scalar(0.1));
  st.hyper.alpha = output_std;
  st.hyper.beta = Scalar(0.1);
  return st;
}

namespace detail {

// Gradient moved to the optimization parameterization: S through its
// Cholesky factor, xi and beta through their logs.
template <typename Scalar>
struct TransformedGrad {
  VectorX<Scalar> d_m;
  MatrixX<Scalar> d_L;  // lower triangular
  VectorX<Scalar> d_nu;
  VectorX<Scalar> d_logxi;
  Scalar d_alpha = 0;
  Scalar d_logbeta = 0;
};

template <typename Scalar>
TransformedGrad<Scalar> to_transformed(const VariationalState<Scalar>& st,
                                       const GradientBundle<Scalar>& g) {
  TransformedGrad<Scalar> t;
  t.d_m = g.d_m;
  const MatrixX<Scalar> GL = (g.d_S + g.d_S.transpose()) * st.S_chol;
  t.d_L = GL.template triangularView<Eigen::Lower>();
  t.d_nu = g.d_nu;
  t.d_logxi = g.d_xi.cwiseProduct(st.hyper.xi);
  t.d_alpha = g.d_alpha;
  t.d_logbeta = g.d_beta * st.hyper.beta;
  return t;
}

// One candidate step of size eta. Returns false when the result leaves the
// valid region (non-finite values, collapsed Cholesky diagonal, xi or beta
// at zero), in which case the caller halves eta.
template <typename Scalar>
bool try_step(const VariationalState<Scalar>& st,
              const TransformedGrad<Scalar>& t, Scalar eta,
              VariationalState<Scalar>& out) {
  out.m = st.m + eta * t.d_m;
  out.S_chol = st.S_chol + eta * t.d_L;
  out.hyper.nu = st.hyper.nu + eta * t.d_nu;
  out.hyper.xi =
      (st.hyper.xi.array() * (eta * t.d_logxi.array()).exp()).matrix();
  out.hyper.alpha = st.hyper.alpha + eta * t.d_alpha;
  out.hyper.beta = st.hyper.beta * std::exp(eta * t.d_logbeta);
  if (!out.m.allFinite() || !out.S_chol.allFinite() ||
      !out.hyper.nu.allFinite() || !out.hyper.xi.allFinite())
    return false;
  if (!std::isfinite(out.hyper.alpha) || !std::isfinite(out.hyper.beta))
    return false;
  if (!(out.hyper.beta > 0) || !(out.hyper.xi.minCoeff() > 0)) return false;
  if (!(out.S_chol.diagonal().minCoeff() > 0)) return false;
  return true;
}

// The valid region is open, so for a finite gradient some halved step always
// lands inside it; the generous cap only matters for absurdly scaled
// gradients (near-singular inducing covariances).
template <typename Scalar>
VariationalState<Scalar> step_with_halving(const VariationalState<Scalar>& st,
                                           const TransformedGrad<Scalar>& tg,
                                           Scalar eta) {
  VariationalState<Scalar> next;
  for (int attempt = 0; attempt <= 60; ++attempt) {
    if (try_step(st, tg, eta, next)) return next;
    eta *= Scalar(0.5);
  }
  throw NumericError(
      "gradient step failed to produce valid parameters after 60 halvings");
}

}  // namespace detail

// Plain Robbins-Monro update at iteration t.
template <typename Scalar>
VariationalState<Scalar> apply_step(const VariationalState<Scalar>& state,
                                    const GradientBundle<Scalar>& grad,
                                    const StepSchedule<Scalar>& schedule,
                                    Index t) {
  return detail::step_with_halving(state, detail::to_transformed(state, grad),
                                   schedule.eta(t));
}

// Stateful stepper: in adaptive mode, per-coordinate accumulated-square
// scaling of the transformed gradient before the common schedule applies.
template <typename Scalar>
class Stepper {
 public:
  Stepper(const TrainConfig<Scalar>& cfg, Index inducing_count, Index dim)
      : cfg_(cfg) {
    if (cfg_.mode == StepMode::Adaptive) {
      acc_m_ = VectorX<Scalar>::Zero(inducing_count);
      acc_L_ = MatrixX<Scalar>::Zero(inducing_count, inducing_count);
      acc_nu_ = VectorX<Scalar>::Zero(dim);
      acc_logxi_ = VectorX<Scalar>::Zero(dim);
    }
  }

  VariationalState<Scalar> step(const VariationalState<Scalar>& state,
                                const GradientBundle<Scalar>& grad, Index t) {
    detail::TransformedGrad<Scalar> tg = detail::to_transformed(state, grad);
    if (cfg_.clip_norm > 0) {
      const Scalar norm = std::sqrt(
          tg.d_m.squaredNorm() + tg.d_L.squaredNorm() + tg.d_nu.squaredNorm() +
          tg.d_logxi.squaredNorm() + tg.d_alpha * tg.d_alpha +
          tg.d_logbeta * tg.d_logbeta);
      if (norm > cfg_.clip_norm) {
        const Scalar s = cfg_.clip_norm / norm;
        tg.d_m *= s;
        tg.d_L *= s;
        tg.d_nu *= s;
        tg.d_logxi *= s;
        tg.d_alpha *= s;
        tg.d_logbeta *= s;
      }
    }
    if (cfg_.mode == StepMode::Adaptive) {
      const Scalar e = cfg_.adagrad_epsilon;
      acc_m_.array() += tg.d_m.array().square();
      acc_L_.array() += tg.d_L.array().square();
      acc_nu_.array() += tg.d_nu.array().square();
      acc_logxi_.array() += tg.d_logxi.array().square();
      acc_alpha_ += tg.d_alpha * tg.d_alpha;
      acc_logbeta_ += tg.d_logbeta * tg.d_logbeta;
      tg.d_m.array() /= acc_m_.array().sqrt() + e;
      tg.d_L.array() /= acc_L_.array().sqrt() + e;
      tg.d_nu.array() /= acc_nu_.array().sqrt() + e;
      tg.d_logxi.array() /= acc_logxi_.array().sqrt() + e;
      tg.d_alpha /= std::sqrt(acc_alpha_) + e;
      tg.d_logbeta /= std::sqrt(acc_logbeta_) + e;
    }
    return detail::step_with_halving(state, tg, cfg_.schedule.eta(t));
  }

 private:
  TrainConfig<Scalar> cfg_;
  VectorX<Scalar> acc_m_, acc_nu_, acc_logxi_;
  MatrixX<Scalar> acc_L_;
  Scalar acc_alpha_ = 0;
  Scalar acc_logbeta_ = 0;
};

}  // namespace vbsgpr
