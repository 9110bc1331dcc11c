#pragma once

#include <cmath>
#include <numbers>

#include "vbsgpr/base.hpp"
#include "vbsgpr/expectations.hpp"

namespace vbsgpr {

template <typename Scalar>
Scalar rmse(const VectorX<Scalar>& predicted, const VectorX<Scalar>& target) {
  require(predicted.size() == target.size() && predicted.size() >= 1,
          "rmse: length mismatch or empty");
  return std::sqrt((predicted - target).squaredNorm() /
                   Scalar(predicted.size()));
}

template <typename Scalar>
Scalar mnlp(const VectorX<Scalar>& predicted, const VectorX<Scalar>& variance,
            const VectorX<Scalar>& target) {
  const Index n = predicted.size();
  require(variance.size() == n && target.size() == n && n >= 1,
          "mnlp: length mismatch or empty");
  require(variance.minCoeff() > 0, "mnlp: nonpositive predictive variance");
  Scalar s = 0;
  for (Index i = 0; i < n; ++i) {
    const Scalar r = target[i] - predicted[i];
    s += r * r / variance[i] +
         std::log(2 * std::numbers::pi_v<Scalar> * variance[i]);
  }
  return Scalar(0.5) * s / Scalar(n);
}

// KL(N(m0, S0) || N(m1, S1)) between full-covariance Gaussians.
template <typename Scalar>
Scalar gaussian_kl(const VectorX<Scalar>& m0, const MatrixX<Scalar>& S0,
                   const VectorX<Scalar>& m1, const MatrixX<Scalar>& S1) {
  const Index k = m0.size();
  require(m1.size() == k && S0.rows() == k && S0.cols() == k &&
              S1.rows() == k && S1.cols() == k,
          "gaussian_kl: dimension mismatch");
  Eigen::LLT<MatrixX<Scalar>> l0(S0), l1(S1);
  if (l0.info() != Eigen::Success || l1.info() != Eigen::Success)
    throw NumericError("gaussian_kl: covariance not positive definite");
  const Scalar tr = l1.solve(S0).trace();
  const VectorX<Scalar> dm = m1 - m0;
  const Scalar quad = dm.dot(l1.solve(dm));
  const Scalar logdet = llt_log_det(l1) - llt_log_det(l0);
  return Scalar(0.5) * (tr + quad - Scalar(k) + logdet);
}

template <typename Scalar>
Scalar gaussian_kl_1d(Scalar m0, Scalar v0, Scalar m1, Scalar v1) {
  require(v0 > 0 && v1 > 0, "gaussian_kl_1d: nonpositive variance");
  const Scalar dm = m1 - m0;
  return Scalar(0.5) * (v0 / v1 + dm * dm / v1 - 1 + std::log(v1 / v0));
}

// KL between two factorized hyperparameter posteriors over (lambda_1..d,
// sigma_f): a sum of one-dimensional Gaussian KLs.
template <typename Scalar>
Scalar hyper_pair_kl(const HyperVariational<Scalar>& a,
                     const HyperVariational<Scalar>& b) {
  require(a.dim() == b.dim(), "hyper_pair_kl: dimension mismatch");
  Scalar s = 0;
  for (Index k = 0; k < a.dim(); ++k)
    s += gaussian_kl_1d(a.nu[k], a.xi[k], b.nu[k], b.xi[k]);
  s += gaussian_kl_1d(a.alpha, a.beta, b.alpha, b.beta);
  return s;
}

template <typename Scalar>
struct MetricReport {
  Scalar rmse = 0;
  Scalar mnlp = 0;
  Index n_test = 0;
  Scalar wall_time_seconds = 0;
};

}  // namespace vbsgpr
