#pragma once

#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/elbo.hpp"

namespace vbsgpr {

// Gradient of the bound with respect to every variational parameter, in the
// untransformed space (d_S is with respect to S itself, d_xi and d_beta with
// respect to xi and beta; the optimizer applies the chain rule for its
// Cholesky and log parameterizations).
template <typename Scalar>
struct GradientBundle {
  VectorX<Scalar> d_m;
  MatrixX<Scalar> d_S;
  VectorX<Scalar> d_nu;
  VectorX<Scalar> d_xi;
  Scalar d_alpha = 0;
  Scalar d_beta = 0;

  static GradientBundle Zero(Index m, Index d) {
    GradientBundle g;
    g.d_m = VectorX<Scalar>::Zero(m);
    g.d_S = MatrixX<Scalar>::Zero(m, m);
    g.d_nu = VectorX<Scalar>::Zero(d);
    g.d_xi = VectorX<Scalar>::Zero(d);
    return g;
  }

  GradientBundle& operator*=(Scalar s) {
    d_m *= s;
    d_S *= s;
    d_nu *= s;
    d_xi *= s;
    d_alpha *= s;
    d_beta *= s;
    return *this;
  }

  GradientBundle& operator+=(const GradientBundle& other) {
    d_m += other.d_m;
    d_S += other.d_S;
    d_nu += other.d_nu;
    d_xi += other.d_xi;
    d_alpha += other.d_alpha;
    d_beta += other.d_beta;
    return *this;
  }
};

namespace detail {

// Quantities shared by every per-block gradient at one state.
template <typename Scalar>
struct GradContext {
  MatrixX<Scalar> A;     // Sigma^-1
  VectorX<Scalar> im;    // Sigma^-1 m
  MatrixX<Scalar> W;     // Sigma^-1 S Sigma^-1
  MatrixX<Scalar> Mpsi;  // -(im im' + W - A) / 2, the psi contraction weight
};

template <typename Scalar>
GradContext<Scalar> make_grad_context(const VariationalState<Scalar>& state,
                                      const InducingSet<Scalar>& ind) {
  GradContext<Scalar> c;
  c.A = ind.inverse();
  c.A = ((c.A + c.A.transpose()) * Scalar(0.5)).eval();
  c.im = ind.solve(state.m);
  const MatrixX<Scalar> S = state.S();
  c.W = ind.solve(ind.solve(S).transpose());
  c.W = ((c.W + c.W.transpose()) * Scalar(0.5)).eval();
  c.Mpsi =
      Scalar(-0.5) * (c.im * c.im.transpose() + c.W - c.A);
  return c;
}

// Adds block s's contribution to the bundle and returns its bound term L_s.
// The psi assembly and its gradient contraction against Mpsi run fused; the
// remaining hyper contributions come from the omega and upsilon contractions.
template <typename Scalar>
Scalar add_block_gradient(GradientBundle<Scalar>& g,
                          const GradContext<Scalar>& ctx,
                          const InducingSet<Scalar>& ind,
                          const TrainingBlocks<Scalar>& tb, Index s,
                          const HyperVariational<Scalar>& h) {
  const MatrixX<Scalar>& Z = ind.rotated_inputs;
  const BlockData<Scalar>& blk = tb.data[s];
  const NoiseBlock<Scalar>& C = tb.noise[s];
  const VectorX<Scalar>& v = tb.cinv_y[s];
  const Scalar zeta = ind.prior_scale;
  const Scalar z2 = zeta * zeta;
  const Index d = h.dim();

  // psi with fused <Mpsi, d psi> contraction (both zeta-free here)
  HyperGrad<Scalar> hg = HyperGrad<Scalar>::Zero(d);
  MatrixX<Scalar> psi_raw =
      C.is_diagonal()
          ? psi_block_contract(Z, blk.X, C.diag, h, ctx.Mpsi, hg)
          : psi_block_contract(Z, blk.X, C.inv, h, ctx.Mpsi, hg);
  hg *= z2;
  const MatrixX<Scalar> psi = z2 * psi_raw;

  // omega and its contraction against im v'
  const MatrixX<Scalar> base = zeta * omega_block_base(Z, blk.X, h);
  const MatrixX<Scalar> omega = h.alpha * base;
  MatrixX<Scalar> H = ctx.im.asDiagonal() * omega;
  H = H * v.asDiagonal();
  omega_contract_grads(Z, blk.X, h, H, hg.d_nu, hg.d_xi);
  hg.d_alpha += ctx.im.dot(base * v);

  // upsilon trace enters with weight -1/2
  HyperGrad<Scalar> ug = C.is_diagonal() ? upsilon_trace_grads(blk.X, C.diag, h)
                                         : upsilon_trace_grads(blk.X, C.inv, h);
  ug *= Scalar(-0.5);
  hg += ug;

  const VectorX<Scalar> ov = omega * v;
  const VectorX<Scalar> psi_im = psi * ctx.im;
  g.d_m += ind.solve(ov - psi_im);
  g.d_S.noalias() -= Scalar(0.5) * (ctx.A * psi * ctx.A);
  g.d_nu += hg.d_nu;
  g.d_xi += hg.d_xi;
  g.d_alpha += hg.d_alpha;
  g.d_beta += hg.d_beta;

  const Scalar fit = ctx.im.dot(ov);
  const Scalar quad = ctx.im.dot(psi_im);
  const Scalar strace = ctx.W.cwiseProduct(psi).sum();
  const Scalar psi_trace = ctx.A.cwiseProduct(psi).sum();
  const Scalar upsilon_trace = C.is_diagonal()
                                   ? upsilon_trace_term(blk.X, C.diag, h)
                                   : upsilon_trace_term(blk.X, C.inv, h);
  const Scalar ls = fit - Scalar(0.5) * quad - Scalar(0.5) * strace -
                    Scalar(0.5) * upsilon_trace + Scalar(0.5) * psi_trace;
  if (!std::isfinite(ls))
    throw NumericError("non-finite gradient contribution in block " +
                       std::to_string(s));
  return ls;
}

// Global terms shared by the stochastic and exact gradients: the derivative
// of the inducing KL and hyperparameter KL parts.
template <typename Scalar>
void add_global_gradient(GradientBundle<Scalar>& g,
                         const GradContext<Scalar>& ctx,
                         const VariationalState<Scalar>& state,
                         const HyperPrior<Scalar>& prior) {
  const Index n = state.m.size();
  g.d_m -= ctx.im;
  const MatrixX<Scalar> Linv =
      state.S_chol.template triangularView<Eigen::Lower>().solve(
          MatrixX<Scalar>::Identity(n, n));
  g.d_S += Scalar(0.5) * (Linv.transpose() * Linv - ctx.A);
  const HyperVariational<Scalar>& h = state.hyper;
  g.d_nu.array() -=
      (h.nu - prior.nu_mean).array() / prior.nu_var.array();
  g.d_xi.array() +=
      Scalar(0.5) / h.xi.array() - Scalar(0.5) / prior.nu_var.array();
  g.d_alpha -= (h.alpha - prior.alpha_mean) / prior.alpha_var;
  g.d_beta += Scalar(0.5) / h.beta - Scalar(0.5) / prior.alpha_var;
}

template <typename Scalar>
void check_gradient_finite(const GradientBundle<Scalar>& g) {
  if (!g.d_m.allFinite()) throw NumericError("non-finite gradient for m");
  if (!g.d_S.allFinite()) throw NumericError("non-finite gradient for S");
  if (!g.d_nu.allFinite()) throw NumericError("non-finite gradient for nu");
  if (!g.d_xi.allFinite()) throw NumericError("non-finite gradient for xi");
  require_finite(g.d_alpha, "gradient for alpha");
  require_finite(g.d_beta, "gradient for beta");
}

}  // namespace detail

template <typename Scalar>
struct GradResult {
  GradientBundle<Scalar> grad;
  Scalar elbo_estimate = 0;  // unbiased estimate of the full bound
};

// Mini-batch gradient over the sampled block indices (a multiset; repeats
// count). Scales the sampled per-block contributions by B/|S| and adds the
// global terms, giving an unbiased estimate of the exact gradient.
//
// With threads > 1 each sampled block is processed into its own bundle and
// the bundles are reduced in sample order, so the arithmetic does not depend
// on how work was distributed.
template <typename Scalar>
GradResult<Scalar> stochastic_gradient(const VariationalState<Scalar>& state,
                                       const std::vector<Index>& sampled,
                                       const InducingSet<Scalar>& ind,
                                       const TrainingBlocks<Scalar>& tb,
                                       const HyperPrior<Scalar>& prior,
                                       int threads = 1) {
  require(!sampled.empty(), "stochastic_gradient: empty sample");
  const Index B = tb.block_count();
  for (Index s : sampled)
    require(s >= 0 && s < B, "stochastic_gradient: block index out of range");

  const detail::GradContext<Scalar> ctx =
      detail::make_grad_context(state, ind);
  const std::size_t count = sampled.size();
  GradResult<Scalar> out;
  out.grad = GradientBundle<Scalar>::Zero(ind.count(), state.hyper.dim());
  Scalar lsum = 0;
  if (threads <= 1 || count <= 1) {
    for (Index s : sampled)
      lsum += detail::add_block_gradient(out.grad, ctx, ind, tb, s, state.hyper);
  } else {
    std::vector<GradientBundle<Scalar>> parts(
        count, GradientBundle<Scalar>::Zero(ind.count(), state.hyper.dim()));
    std::vector<Scalar> bounds(count, Scalar(0));
    const int workers = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(threads), count));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int tid = 0; tid < workers; ++tid) {
      pool.emplace_back([&, tid] {
        try {
          for (std::size_t i = static_cast<std::size_t>(tid); i < count;
               i += static_cast<std::size_t>(workers))
            bounds[i] = detail::add_block_gradient(parts[i], ctx, ind, tb, sampled[i],
                                                   state.hyper);
        } catch (...) {
          errors[static_cast<std::size_t>(tid)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);
    for (std::size_t i = 0; i < count; ++i) {
      out.grad += parts[i];
      lsum += bounds[i];
    }
  }
  const Scalar scale = Scalar(B) / Scalar(sampled.size());
  out.grad *= scale;
  detail::add_global_gradient(out.grad, ctx, state, prior);
  out.grad.d_S = ((out.grad.d_S + out.grad.d_S.transpose()) * Scalar(0.5)).eval();
  detail::check_gradient_finite(out.grad);
  out.elbo_estimate = scale * lsum + inducing_kl_term(state, ind) +
                      hyper_kl_term(state.hyper, prior) + elbo_constant(tb);
  return out;
}

// Full-batch gradient: every block exactly once plus the global terms.
template <typename Scalar>
GradResult<Scalar> exact_gradient(const VariationalState<Scalar>& state,
                                  const InducingSet<Scalar>& ind,
                                  const TrainingBlocks<Scalar>& tb,
                                  const HyperPrior<Scalar>& prior) {
  const detail::GradContext<Scalar> ctx =
      detail::make_grad_context(state, ind);
  GradResult<Scalar> out;
  out.grad = GradientBundle<Scalar>::Zero(ind.count(), state.hyper.dim());
  Scalar lsum = 0;
  for (Index s = 0; s < tb.block_count(); ++s)
    lsum += detail::add_block_gradient(out.grad, ctx, ind, tb, s, state.hyper);
  detail::add_global_gradient(out.grad, ctx, state, prior);
  out.grad.d_S = ((out.grad.d_S + out.grad.d_S.transpose()) * Scalar(0.5)).eval();
  detail::check_gradient_finite(out.grad);
  out.elbo_estimate = lsum + inducing_kl_term(state, ind) +
                      hyper_kl_term(state.hyper, prior) + elbo_constant(tb);
  return out;
}

}  // namespace vbsgpr
