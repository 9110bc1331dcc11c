#pragma once

#include <cmath>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/elbo.hpp"
#include "vbsgpr/rng.hpp"

namespace vbsgpr {

template <typename Scalar>
struct PredictiveResult {
  Scalar mean = 0;
  Scalar variance = 0;
  Index sample_count = 0;  // 0 for the analytic path
};

namespace detail {

// Keeps the predictive variance positive in the face of roundoff; anything
// this close to zero is numerically indistinguishable from degenerate.
template <typename Scalar>
Scalar variance_floor(const HyperVariational<Scalar>& h) {
  return Scalar(1e-12) * h.second_moment() + Scalar(1e-300);
}

template <typename Scalar>
Scalar clamp_variance(Scalar var, const HyperVariational<Scalar>& h) {
  const Scalar floor = variance_floor(h);
  if (var < floor) {
    warn("predictive variance clamped to numerical floor");
    return floor;
  }
  return var;
}

}  // namespace detail

// Solves shared by predictions at one trained state.
template <typename Scalar>
struct PredictContext {
  VectorX<Scalar> im;  // Sigma^-1 m
  MatrixX<Scalar> A;   // Sigma^-1
  MatrixX<Scalar> W;   // Sigma^-1 S Sigma^-1
};

template <typename Scalar>
PredictContext<Scalar> make_predict_context(
    const VariationalState<Scalar>& state, const InducingSet<Scalar>& ind) {
  PredictContext<Scalar> c;
  c.im = ind.solve(state.m);
  c.A = ind.inverse();
  c.A = ((c.A + c.A.transpose()) * Scalar(0.5)).eval();
  const MatrixX<Scalar> S = state.S();
  c.W = ind.solve(ind.solve(S).transpose());
  c.W = ((c.W + c.W.transpose()) * Scalar(0.5)).eval();
  return c;
}

/*
 * Closed-form predictive for the variants that share the approximated test
 * conditional. With M = E[K_Ix K_xI] and the omega row w = E[K_xI]:
 *
 *   mean = w Sigma^-1 m
 *   var  = E[k_xx] - <Sigma^-1, M> + <Sigma^-1 S Sigma^-1, M>
 *          + (Sigma^-1 m)' M (Sigma^-1 m) - mean^2
 *
 * where the last two terms are the hyperparameter-uncertainty contribution
 * m' Sigma^-1 (M - w'w) Sigma^-1 m spelled through the mean.
 */
template <typename Scalar, typename Derived>
PredictiveResult<Scalar> predict_analytic(const VariationalState<Scalar>& state,
                                          const InducingSet<Scalar>& ind,
                                          const PredictContext<Scalar>& ctx,
                                          const Eigen::MatrixBase<Derived>& x) {
  const HyperVariational<Scalar>& h = state.hyper;
  require(x.size() == h.dim(), "predict_analytic: test point dimension");
  const Scalar zeta = ind.prior_scale;

  MatrixX<Scalar> xrow(1, x.size());
  xrow.row(0) = x.transpose();
  const MatrixX<Scalar> wbar =
      zeta * omega_block(ind.rotated_inputs, xrow, h);  // |I| x 1
  const VectorX<Scalar> ones = VectorX<Scalar>::Ones(1);
  const MatrixX<Scalar> M =
      zeta * zeta * psi_block(ind.rotated_inputs, xrow, ones, h);

  PredictiveResult<Scalar> out;
  out.mean = wbar.col(0).dot(ctx.im);
  const Scalar var = h.second_moment() - ctx.A.cwiseProduct(M).sum() +
                     ctx.W.cwiseProduct(M).sum() +
                     ctx.im.dot(M * ctx.im) - out.mean * out.mean;
  out.variance = detail::clamp_variance(var, h);
  return out;
}

template <typename Scalar, typename Derived>
PredictiveResult<Scalar> predict_analytic(const VariationalState<Scalar>& state,
                                          const InducingSet<Scalar>& ind,
                                          const Eigen::MatrixBase<Derived>& x) {
  return predict_analytic(state, ind, make_predict_context(state, ind), x);
}

/*
 * Sampling-based predictive through the exact in-block test conditional.
 * Each hyperparameter draw theta = (Lambda, sigma_f) fixes the joint
 * covariance of (s_I, y_B),
 *
 *   J = [ Sigma      K_IB          ]
 *       [ K_BI       K_BB + C_B    ]
 *
 * and the conditional mean/variance of f_x given (s_I, y_B). Averaging the
 * conditional means and adding their population variance to the averaged
 * conditional variance gives the two-moment summary; with one sample the
 * result is exactly the deterministic point-hyperparameter predictive.
 */
template <typename Scalar, typename Derived>
PredictiveResult<Scalar> predict_pic(const VariationalState<Scalar>& state,
                                     const InducingSet<Scalar>& ind,
                                     const BlockData<Scalar>& block,
                                     const NoiseBlock<Scalar>& block_noise,
                                     const Eigen::MatrixBase<Derived>& x,
                                     Index n_samples, Rng& rng) {
  const HyperVariational<Scalar>& h = state.hyper;
  const Index d = h.dim();
  const Index mI = ind.count();
  const Index nb = block.X.rows();
  require(x.size() == d, "predict_pic: test point dimension");
  require(n_samples >= 1, "predict_pic: need at least one sample");
  require(nb == 0 || block.X.cols() == d, "predict_pic: block dimension");

  const MatrixX<Scalar> S = state.S();
  const Scalar zeta = ind.prior_scale;
  const MatrixX<Scalar>& Z = ind.rotated_inputs;

  VectorX<Scalar> lam(d), k(mI + nb), w(mI + nb);
  MatrixX<Scalar> J;
  std::vector<Scalar> cond_means;
  cond_means.reserve(static_cast<size_t>(n_samples));
  Scalar var_sum = 0;

  for (Index s = 0; s < n_samples; ++s) {
    for (Index kk = 0; kk < d; ++kk)
      lam[kk] = rng.normal(h.nu[kk], h.xi[kk]);
    const Scalar sf = rng.normal(h.alpha, h.beta);

    KernelParams<Scalar> kp;
    kp.inverted_lengthscales = lam;
    kp.signal_std = sf;

    for (Index i = 0; i < mI; ++i)
      k[i] = cov_fs(x, Z.row(i).transpose(), kp, zeta);

    Scalar a, v;
    if (nb == 0) {
      w.head(mI) = ind.solve(k.head(mI));
      a = w.head(mI).dot(state.m);
      v = sf * sf - k.head(mI).dot(w.head(mI)) +
          w.head(mI).dot(S * w.head(mI));
    } else {
      for (Index j = 0; j < nb; ++j)
        k[mI + j] = cov_ff(x, block.X.row(j).transpose(), kp);
      J.resize(mI + nb, mI + nb);
      J.topLeftCorner(mI, mI) = ind.sigma;
      for (Index i = 0; i < mI; ++i)
        for (Index j = 0; j < nb; ++j)
          J(i, mI + j) = cov_fs(block.X.row(j).transpose(),
                                Z.row(i).transpose(), kp, zeta);
      J.bottomLeftCorner(nb, mI) = J.topRightCorner(mI, nb).transpose();
      for (Index i = 0; i < nb; ++i)
        for (Index j = 0; j <= i; ++j) {
          const Scalar kv = cov_ff(block.X.row(i).transpose(),
                                   block.X.row(j).transpose(), kp);
          J(mI + i, mI + j) = kv;
          J(mI + j, mI + i) = kv;
        }
      if (block_noise.is_diagonal())
        J.bottomRightCorner(nb, nb).diagonal() += block_noise.diag;
      else
        J.bottomRightCorner(nb, nb) += block_noise.cov;

      const auto llt = robust_llt(J, "predictive joint");
      w = llt.solve(k);
      a = w.head(mI).dot(state.m) + w.tail(nb).dot(block.y);
      v = sf * sf - k.dot(w) + w.head(mI).dot(S * w.head(mI));
    }
    cond_means.push_back(a);
    var_sum += v;
  }

  PredictiveResult<Scalar> out;
  out.sample_count = n_samples;
  Scalar mean = 0;
  for (const Scalar a : cond_means) mean += a;
  mean /= Scalar(n_samples);
  Scalar spread = 0;
  for (const Scalar a : cond_means) spread += (a - mean) * (a - mean);
  spread /= Scalar(n_samples);
  out.mean = mean;
  out.variance =
      detail::clamp_variance(var_sum / Scalar(n_samples) + spread, h);
  return out;
}

// Nearest training-partition centroid; ties go to the lowest block index.
template <typename Scalar, typename Derived>
Index assign_test_block(const Eigen::MatrixBase<Derived>& x,
                        const MatrixX<Scalar>& centroids) {
  require(centroids.rows() >= 1, "assign_test_block: no centroids");
  require(centroids.cols() == x.size(), "assign_test_block: dimension");
  Index best = 0;
  Scalar best_d2 = (centroids.row(0).transpose() - x).squaredNorm();
  for (Index b = 1; b < centroids.rows(); ++b) {
    const Scalar d2 = (centroids.row(b).transpose() - x).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = b;
    }
  }
  return best;
}

}  // namespace vbsgpr
